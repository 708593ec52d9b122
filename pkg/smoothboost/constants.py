"""
SmoothBoost Constants
"""

# Logistic exponent arguments are clamped here (IEEE double overflow boundary)
EXP_CLAMP = 700.0

# Ridge added to the diagonal of the 2x2 leaf-weight system and the OLS benchmark
RIDGE = 1e-10

# Below this squared norm a fitted learner is treated as null (line search returns 0)
NULL_LEARNER_NORM = 1e-300

# Relative tolerance when re-checking stored column standard deviations
SD_TOLERANCE = 1e-12

MODEL_FORMAT_VERSION = 2
# Version 1 files predate the stored target name and still load
READABLE_MODEL_FORMATS = (1, 2)

# Floats written to CSV with 17 significant digits round-trip exactly
FLOAT_FORMAT = "%.17g"

THREADS_ENV_VAR = "SMOOTHBOOST_THREADS"

DEFAULT_NUM_TREES = 1000
DEFAULT_SPLITS_PER_TREE = 4
DEFAULT_GAMMA_RANGE = (0.5, 5.0)
DEFAULT_SHRINKAGE = 0.2
DEFAULT_VARIABLE_FRACTION = 2.0 / 3.0
DEFAULT_THRESHOLD_GRID = 100
DEFAULT_SEED = 0
