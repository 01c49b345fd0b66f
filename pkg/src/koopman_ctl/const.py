FIT_LOG = 'fit {kind}({order}) on {snapshots} snapshots: lifted_dim={lifted_dim}, inputs={inputs}'
SPECTRUM_LOG = 'spectrum of {dim}x{dim} model: eigenvector condition {condition:.3e}'
DARE_LOG = 'dare[{method}] converged after {iterations} iterations, residual {residual:.3e}, rho(A-BK)={rho:.6f}'
SWEEP_CELL_LOG = 'sweep cell {kind}({order}) x {samples} samples -> {status} e_rms={e_rms}'
ARTIFACT_LOG = 'wrote {path} sha256={digest}'
SIMULATE_LOG = 'simulated {steps} samples ({substeps} substeps each)'

STATE_DIM = 45
INPUT_DIM = 3
NODE_COUNT = 15

DEFAULT_RCOND = 1e-10
EIG_CONDITION_CAP = 1e13
DARE_TOLERANCE = 1e-10
DARE_MAX_ITERATIONS = 100_000
BASIS_CONDITION_CAP = 1e12

MAX_DELAY_ORDER = 64
MAX_MONOMIAL_ORDER = 16
MONOMIAL_SCALE = 1000.0

SAMPLE_DT = 0.02
INTEGRATOR_DT = 0.002
SETTLE_SECONDS = 60.0

U_BOUNDS = (0.3, 0.85)
N_GAUSSIANS = 150
HOLD_RANGE = (1.0, 4.0)
REGIME_DURATION = 540.0

Q_WEIGHT = 1.0
R_WEIGHT = 10.0
MODE_COUNTS = (7, 16, 35, 60, None)
VERIFICATION_SAMPLES = 27_000

THREADS_ENV = 'KOOPMAN_CTL_THREADS'

PLAN_HORIZON = 1500
SPLIT_FRACTION = 0.5
POSE_FRACTIONS = (0.3, 0.7)
SWEEP_DELAY_ORDERS = (0, 1, 2, 4, 6, 8, 10)
SWEEP_MONOMIAL_ORDERS = (1, 2, 3, 4)
SWEEP_SAMPLE_COUNTS = (1000, 2000, 5000, 10_000, 20_000)
ROLLOUT_SECONDS = 20.0

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
