DEFAULT_M = 3
DEFAULT_R = 1

ORBIT_BUDGET = 1_000_000
IDENTITY_ORBIT_BUDGET = 2_000
MAGNITUDE_CAP_BITS = 4096

OMEGA_HAT_BUDGET = 20_000
OMEGA_HAT_TOLERANCE = 1e-6
CYCLE_PROBE_BUDGET = 10_000

# Omega-hat divergence heuristic: 2^k / |m|^j above the threshold for this many steps
DIVERGENCE_THRESHOLD = 1e12
DIVERGENCE_RUN = 64

DENSITY_WINDOW = 128
MIN_CERTIFIED_TERMS = 32

EXACT_BITS_LIMIT = 1 << 16
GUARD_BITS = 64

QBAR_MAX_K = 24

DEFAULT_GRID = [
    (3, 1),
    (5, 1),
    (3, 5),
    (7, 1),
    (1, 1),
    (1, -1),
    (1, 3),
    (1, -3),
    (5, -3),
]

TABLE1_PARAMS = (5, 1)
TABLE1_XS = [-9, -7, -5, -3, -1, 0, 1, 3, 5, 7, 9]
TABLE1_PREFIX_BITS = 64

SCAN_HAT_XS = [-9, -7, -5, -3, -1, 0, 1, 3, 5, 7, 9]
SCAN_PAIRS_K_PROBE = 128
