"""
Configuration and constants for the FedQS simulator.
"""

# ---- Protocol hyperparameters ----
DEFAULT_NUM_CLIENTS = 100
DEFAULT_K = 10                 # updates required to trigger aggregation
DEFAULT_ROUNDS = 400           # global rounds T
DEFAULT_LOCAL_EPOCHS = 2       # E
DEFAULT_ETA0 = 0.1
DEFAULT_ETA_MIN = 0.001
DEFAULT_ETA_MAX = 0.2
DEFAULT_A = 0.002              # learning-rate change rate
DEFAULT_M0 = 0.1               # initial momentum rate
DEFAULT_K_MOMENTUM = 0.2       # momentum change speed
DEFAULT_THETA_CAP = 0.9        # momentum clipping boundary
DEFAULT_GRAD_CLIP = 20.0       # G_c
DEFAULT_SPEED_RATIO = 50.0     # fastest : slowest

# ---- Tunables without a canonical value ----
DEFAULT_SPREAD_THRESHOLD = 0.2   # SBC per-label recall spread above which feedback is raised
DEFAULT_G_MAX = 100.0            # cap on |s_bar / s_u| in server weighting
DEFAULT_WEIGHT_FLOOR = 1e-6      # raw weights are floored before normalization
DEFAULT_ETA_G = 0.2              # global LR, sync gradient rule only
DEFAULT_COST_C0 = 1.0            # duration = (c0 + c1 * n_i * E) / speed
DEFAULT_COST_C1 = 0.01
INIT_SCALE = 0.05                # parameters start in U[-0.05, 0.05]

# ---- Data ----
DEFAULT_TRAIN_FRACTION = 0.8     # client train/val split (8:2)
DEFAULT_TEST_FRACTION = 0.2      # held-out test share for CSV sources
DEFAULT_DIRICHLET_X = 0.5
DEFAULT_LOGNORMAL_SIGMA = 1.0

# ---- Metrics ----
OSCILLATION_THRESHOLD = 15.0     # percentage points
CONVERGENCE_WINDOW = 20          # last-N rounds averaged into convergence accuracy
DEFAULT_TARGET_FRACTION = 0.95
CSV_COLUMNS = [
    "round", "vtime", "test_acc", "test_loss",
    "mean_staleness", "num_feedback", "f_bar", "s_bar",
]

# ---- Desk-scale profile: overrides applied on top of the defaults ----
DESK_PROFILE = {
    "num_clients": 20,
    "k_trigger": 4,
    "rounds": 150,
    "speed_ratio": 10.0,
    "num_classes": 10,
    "dim": 20,
    "per_class": 200,
    "g_max": 0.25,   # (1 + G)^2 stays within [0.5625, 1.5625]
}

# ---- Seed streams: independent generators derived from one run seed ----
STREAM_INIT = 0
STREAM_SPEEDS = 1
STREAM_ACTIVATION = 2
STREAM_DATA = 3
STREAM_TEST = 4
STREAM_PARTITION = 5
STREAM_SPLIT = 6

# ---- Output ----
AGGREGATE_FILE = "aggregate.json"
EVENTS_FILE = "events.jsonl"
REPLAY_MAGIC = b"FQSR"

# ---- Experiment harness ----
DEFAULT_PROFILE = "full"
PROFILES = ("full", "desk")
DEFAULT_RUN_ID = "run"
DEFAULT_OUT_DIR = "out"
DEFAULT_TEST_PER_CLASS = 50      # synthetic held-out samples per class
DEFAULT_HIDDEN_DIM = 32
SUMMARY_FILE = "summary.json"
TRACE_FILE = "trace.csv"
REPLAY_FILE = "replay.bin"
CONFIG_FILE = "config.txt"
