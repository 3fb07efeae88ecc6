"""
Define constants used throughout the code.
"""

import pathlib

__settings_orgName__ = "EikoPlan"
__package_name__ = "EikoPlan"
__version__ = "0.1.0"


ROOT_DIR = pathlib.Path(__file__).parent

APP_DESC = (
    "EikoPlan: learned travel-time fields over object poses for"
    " collision-aware manipulation and regrasp planning."
)
APP_TITLE = __package_name__
VERSION = __version__

# Checkpoint and dataset container versions
CHECKPOINT_FORMAT_VERSION = 1
DATASET_FORMAT_VERSION = 1

# Pose space
POSE_DIM = 6
W_ROT = 0.2  # m/rad, rotation weight in pose-space metrics

# Point clouds and scenes
CANONICAL_POINTS = 64
GRID_SPACING = 0.01  # m

# Speed model
S_CONST = 1.0
D_MIN = 0.05  # m
D_MAX = 0.3  # m
SHELL_R_INNER = 0.15  # m
SHELL_R_OUTER = 0.9  # m
MAX_REJECTIONS = 10_000

# Marching / planning
ETA = 0.03
D_S = 0.05
MAX_ITERS = 2000
DEPTH_LIMIT = 3
VALIDATION_RESOLUTION = 0.001  # m

# Training
EPOCHS = 200
BATCH_SIZE = 256
LEARNING_RATE = 1e-3
EPSILON = 0.1
N_TUPLES = 10_000
