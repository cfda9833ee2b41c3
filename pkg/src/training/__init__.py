from src.training.data import SceneDataset, input_mic_ids, open_splits
from src.training.losses import LossWeights, combine_losses, total_loss
from src.training.trainer import RunRecord, train
from src.training.evaluate import EvalResult, evaluate, evaluate_model
from src.training.inference import infer_s3r
from src.training.ablation import GRIDS, ablate
