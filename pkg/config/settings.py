import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Settings:
    # Runtime
    THREADS = int(os.getenv("BAPN_THREADS", 1))
    LOG_LEVEL = os.getenv("BAPN_LOG_LEVEL", "INFO")

    # Data paths
    DATA_ROOT = os.getenv("BAPN_DATA_ROOT", "data/sim")
    RUNS_ROOT = os.getenv("BAPN_RUNS_ROOT", "runs")
    DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "defaults.conf")

    # Signal presets (desk-scale; the recorded data ran at 96 kHz)
    SAMPLE_RATE = 16000
    CLIP_SECONDS = 2.0
    STFT_WINDOW = 512
    STFT_HOP = 160
    TARGET_RMS = 0.1
    SILENCE_FLOOR = 1e-8

    # Rig
    PAIR_ORIENTATIONS = (0, 90, 180, 270)
    EAR_SEPARATION = 0.18  # meters
    SPEED_OF_SOUND = 343.0  # m/s
    FAR_DEPTH = 50.0  # meters

    def apply_thread_cap(self):
        """Pin BLAS pools to THREADS; must run before numpy is imported."""
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(self.THREADS))

# Create settings instance
settings = Settings()
