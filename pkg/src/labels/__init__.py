from src.labels.pseudo_label import (
    LabelStack,
    SoundMask,
    mode_background,
    pseudo_labels,
    sound_mask,
    to_training_target,
)
