import os

# ----------------------------
# General
# ----------------------------
VERSION = os.getenv("VERSION", "dev")
SCHEMA_VERSION = 1

# ----------------------------
# Logging configuration
# ----------------------------
LOG_LEVEL = os.getenv("PETZCHECK_LOG_LEVEL", "INFO")  # Options: DEBUG, INFO, WARNING, ERROR, CRITICAL

# ----------------------------
# Numerical floors and tolerances
# ----------------------------
NORMALIZATION_TOL = float(os.getenv("PETZCHECK_NORMALIZATION_TOL", 1e-12))
HERMITIAN_TOL = float(os.getenv("PETZCHECK_HERMITIAN_TOL", 1e-12))
POSITIVITY_TOL = float(os.getenv("PETZCHECK_POSITIVITY_TOL", 1e-12))
STATE_TRACE_TOL = float(os.getenv("PETZCHECK_STATE_TRACE_TOL", 1e-10))
INVERTIBILITY_FLOOR = float(os.getenv("PETZCHECK_INVERTIBILITY_FLOOR", 1e-6))
STRICTNESS_FLOOR = float(os.getenv("PETZCHECK_STRICTNESS_FLOOR", 1e-8))
RANK_RTOL = float(os.getenv("PETZCHECK_RANK_RTOL", 1e-14))  # per dimension, relative to λ_max

# Channel invariants
BLOCK_TOL = float(os.getenv("PETZCHECK_BLOCK_TOL", 1e-11))
TP_TOL = float(os.getenv("PETZCHECK_TP_TOL", 1e-10))
CHOI_FLOOR = float(os.getenv("PETZCHECK_CHOI_FLOOR", -1e-10))

# Superoperator PSD checks
SYMMETRIZATION_TOL = float(os.getenv("PETZCHECK_SYMMETRIZATION_TOL", 1e-11))
CONTRACTION_TOL = float(os.getenv("PETZCHECK_CONTRACTION_TOL", 1e-10))

# Inequality slack used when a library call is asked to assert its own contract
CHAIN_TOL = float(os.getenv("PETZCHECK_CHAIN_TOL", 1e-9))
FIXED_POINT_TOL = float(os.getenv("PETZCHECK_FIXED_POINT_TOL", 1e-9))

# ----------------------------
# Randomized construction
# ----------------------------
MAX_RESAMPLES = int(os.getenv("PETZCHECK_MAX_RESAMPLES", 20))
SINGULAR_COND = float(os.getenv("PETZCHECK_SINGULAR_COND", 1e12))
