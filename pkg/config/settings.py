import os


class Config:
    # Chemins
    BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    DEFAULT_CONFIG_PATH = os.path.join(BASE_DIR, "config", "tensegrity.yaml")
    DEFAULT_TOPOLOGY_PATH = os.path.join(BASE_DIR, "config", "superball.json")
    OUTPUT_DIR = "runs"

    # Moteur (1000 Hz)
    ENGINE_DT = 0.001
    GRAVITY = 9.81
    INTEGRATOR = "semi-implicit"
    COUPLING = "jacobi"
    UNILATERAL_CABLES = True
    CONDITION_LIMIT = 1e12
    CHECKPOINT_EVERY = 100

    # Actionneurs (filtre du premier ordre)
    CONTROL_LIMIT = 100.0
    ACTUATOR_TAU = 0.1

    # SUPERball
    ROD_MASS = 10.0
    ROD_LENGTH = 1.684
    ROD_RADIUS = 0.05
    CABLE_STIFFNESS = 10000.0
    CABLE_DAMPING = 1000.0
    CABLE_REST_LENGTH = 0.95
    MOTOR_SCALE = 0.25

    # Contact sol
    GROUND_STIFFNESS = 1.0e5
    GROUND_DAMPING = 1.0e3
    GROUND_FRICTION = 1.0
    GROUND_RESTITUTION = 0.0
    FRICTION_EPSILON = 1e-4
    SETTLE_STEPS = 5000
    SETTLE_TOLERANCE = 1e-6
    SETTLE_WINDOW = 100
    RESTITUTION_THRESHOLD = 0.05
    CONTACT_ITERATIONS = 20
    CONTACT_REGULARIZATION = 1e-10

    # Données (échantillonnage 10 Hz)
    SAMPLE_INTERVAL = 0.1
    TRAJECTORY_SECONDS = 5.0
    N_TRAIN = 10
    N_VAL = 2
    N_TEST = 10

    # Entraînement progressif
    LEARNING_RATE = 0.1
    LR_FLOOR = 1e-4
    PATIENCE = 5
    MIN_IMPROVEMENT = 0.01
    MAX_EPOCHS_PER_PHASE = 200
    GRAD_CLIP = 1.0

    # Planification
    PLAN_STEPS = 50
    PLAN_ITERATIONS = 5
    PLAN_SAMPLES = 40
    PLAN_HORIZON_SECONDS = 1.0
    MPPI_LAMBDA = 1.0
    CONTROL_SIGMA = 20.0
    CEM_ELITE_FRACTION = 0.25
    TARGET_VELOCITY = 1.0
    LATERAL_WEIGHT = 1.0

    # Débogage
    LOG_LEVEL = "INFO"
    SEED = 0
