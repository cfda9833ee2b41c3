import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.labels.pseudo_label import (
    COMPACT_IDS,
    LabelStack,
    load_class_table,
    load_label_stack,
    mode_background,
    pseudo_labels,
    sound_mask,
    to_training_target,
    write_sound_mask,
)
from src.simulator.ground_truth import STREET_CLASS_TABLE, STREET_IDS, LabelGrid, ground_truth_semantic, synth_label_stack
from src.simulator.sources import Scene, SourceSpec
from src.utils.errors import BadConfig, EmptyStack, ShapeMismatch, UnknownClass
from src.utils.images import read_pgm, write_pgm

CAR, ROAD, SKY = STREET_IDS["car"], STREET_IDS["road"], STREET_IDS["sky"]


def _stack(frames):
    return LabelStack([LabelGrid(np.asarray(f)) for f in frames], dict(STREET_CLASS_TABLE))


def _targets(stack):
    return stack.ids_for(COMPACT_IDS)


def test_identical_frames_are_their_own_background():
    frame = np.random.default_rng(0).integers(0, 6, size=(4, 5))
    np.testing.assert_array_equal(mode_background(_stack([frame] * 3)).cells, frame)


def test_strict_majority():
    stack = _stack([[[1]], [[1]], [[2]]])
    assert mode_background(stack).cells[0, 0] == 1


def test_ties_go_to_the_smallest_id():
    assert mode_background(_stack([[[4]], [[2]]])).cells[0, 0] == 2


@given(arrays(np.int64, st.tuples(st.integers(1, 7), st.integers(1, 4), st.integers(1, 4)), elements=st.integers(0, 5)))
@settings(max_examples=60, deadline=None)
def test_mode_matches_histogram(frames):
    got = mode_background(_stack(frames)).cells
    for r in range(frames.shape[1]):
        for c in range(frames.shape[2]):
            assert got[r, c] == int(np.argmax(np.bincount(frames[:, r, c])))


def test_stack_validation():
    with pytest.raises(EmptyStack):
        _stack([])
    with pytest.raises(ShapeMismatch):
        _stack([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(UnknownClass):
        _stack([np.full((2, 2), 9)])


def test_sound_mask_cells():
    frame = LabelGrid(np.array([[CAR, CAR, SKY]]))
    background = LabelGrid(np.array([[CAR, ROAD, ROAD]]))
    mask = sound_mask(frame, background, {CAR})
    np.testing.assert_array_equal(mask.cells, [[0, 1, 0]])
    with pytest.raises(ShapeMismatch):
        sound_mask(frame, LabelGrid(np.zeros((2, 3))), {CAR})


@given(arrays(np.int64, (4, 6), elements=st.integers(0, 5)))
@settings(max_examples=40, deadline=None)
def test_frame_equal_to_background_has_no_sound(frame):
    grid = LabelGrid(frame)
    assert not sound_mask(grid, grid, range(6)).cells.any()


@given(arrays(np.int64, (4, 6), elements=st.integers(0, 5)), arrays(np.int64, (4, 6), elements=st.integers(0, 5)),
       st.sets(st.integers(0, 5)), st.sets(st.integers(0, 5)))
@settings(max_examples=60, deadline=None)
def test_more_targets_never_shrink_the_mask(frame, background, targets, extra):
    frame, background = LabelGrid(frame), LabelGrid(background)
    small = sound_mask(frame, background, targets).cells
    large = sound_mask(frame, background, targets | extra).cells
    assert np.all(large >= small)


@pytest.mark.parametrize("azimuths", [[30.0], [200.0, 320.0], [10.0, 100.0, 250.0]])
def test_simulator_ground_truth_survives_the_chain(azimuths):
    classes = ["car", "motorcycle", "train"]
    sources = [SourceSpec(cls=classes[i % 3], azimuth=a, distance=3.0 + i, seed=i) for i, a in enumerate(azimuths)]
    gt = ground_truth_semantic(Scene(sources=sources), 16, 64)
    table = {0: "background", 1: "car", 2: "motorcycle", 3: "train"}
    mask = sound_mask(gt, LabelGrid(np.zeros_like(gt.cells)), {1, 2, 3})
    np.testing.assert_array_equal(to_training_target(mask, gt, table).cells, gt.cells)


def test_training_targets():
    frame = LabelGrid(np.array([[CAR, STREET_IDS["train"], ROAD]]))
    mask = sound_mask(frame, LabelGrid(np.full((1, 3), ROAD)), {CAR, STREET_IDS["train"]})
    np.testing.assert_array_equal(to_training_target(mask, frame, STREET_CLASS_TABLE).cells, [[1, 3, 0]])
    empty = sound_mask(frame, frame, {CAR})
    assert not np.any(to_training_target(empty, frame, STREET_CLASS_TABLE).cells)


def test_tram_maps_to_train():
    table = {0: "road", 7: "tram"}
    frame = LabelGrid(np.array([[7, 0]]))
    mask = sound_mask(frame, LabelGrid(np.zeros((1, 2))), {7})
    assert to_training_target(mask, frame, table).cells[0, 0] == 3


def test_masked_non_target_is_rejected():
    frame = LabelGrid(np.array([[SKY]]))
    mask = sound_mask(frame, LabelGrid(np.array([[ROAD]])), {SKY})
    with pytest.raises(UnknownClass):
        to_training_target(mask, frame, STREET_CLASS_TABLE)


def test_moving_sources_kept_parked_car_dropped():
    scene = Scene(sources=[SourceSpec(cls="motorcycle", azimuth=60.0, distance=3.0, seed=0)])
    parked = [SourceSpec(cls="car", azimuth=240.0, distance=3.0, seed=1)]
    synth = synth_label_stack(scene, 16, 64, frames=15, parked=parked)
    stack = LabelStack(synth["frames"], synth["class_table"])
    frame = stack.frames[synth["middle"]]
    target = pseudo_labels(stack, synth["middle"])

    assert np.any(frame.cells == CAR)
    assert not np.any(target.cells[frame.cells == CAR])
    moving = frame.cells == STREET_IDS["motorcycle"]
    assert np.any(moving)
    assert np.all(target.cells[moving] == COMPACT_IDS["motorcycle"])
    assert set(np.unique(target.cells)) <= {0, 2}


def test_synth_stack_needs_frames():
    with pytest.raises(BadConfig):
        synth_label_stack(Scene(), 8, 8, frames=0)


def test_label_files(tmp_path):
    frames = np.random.default_rng(1).integers(0, 6, size=(4, 3, 5))
    for t, frame in enumerate(frames):
        write_pgm(tmp_path / "maps" / f"frame_{t:03d}.pgm", frame)
    (tmp_path / "classes.json").write_text(json.dumps({str(k): v for k, v in STREET_CLASS_TABLE.items()}))
    table = load_class_table(tmp_path / "classes.json")
    assert table == STREET_CLASS_TABLE

    stack = load_label_stack(tmp_path / "maps", table, frames=3)
    assert len(stack.frames) == 3
    np.testing.assert_array_equal(stack.as_array(), frames[:3])

    mask = sound_mask(stack.frames[0], mode_background(stack), _targets(stack))
    assert set(np.unique(read_pgm(write_sound_mask(tmp_path / "mask.pgm", mask)))) <= {0, 255}

    with pytest.raises(EmptyStack):
        load_label_stack(tmp_path / "nothing", table)
    (tmp_path / "bad.json").write_text(json.dumps({"car": 1}))
    with pytest.raises(BadConfig):
        load_class_table(tmp_path / "bad.json")
