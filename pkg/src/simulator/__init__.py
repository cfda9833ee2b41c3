from src.simulator.ground_truth import DepthGrid, LabelGrid, ground_truth_depth, ground_truth_semantic
from src.simulator.rig import DEFAULT_RIG, RigClip, RigConfig, render_binaural, render_rig
from src.simulator.sources import Scene, SourceSpec, synth_source_signal
