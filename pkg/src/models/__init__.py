from src.models.binaural_net import NUM_CLASSES, BinauralPerceptionNet, ModelOutput, encoder_output_size

__all__ = ["BinauralPerceptionNet", "ModelOutput", "NUM_CLASSES", "encoder_output_size"]
