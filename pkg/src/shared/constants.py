"""Application constants."""

import math

# Cell States
CELL_UNKNOWN = -1
CELL_FREE = 0
CELL_OCCUPIED = 1

# PGM grey levels per cell state
PGM_UNKNOWN = 0
PGM_FREE = 128
PGM_OCCUPIED = 255

# Exit Codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_TIMEOUT = 2
EXIT_VALIDATION = 3

# Scenario Modes
MODE_PLAN2D = "plan2d"
MODE_NAVIGATE2D = "navigate2d"
MODE_NAVIGATE3D = "navigate3d"
MODE_EXPLORE2D = "explore2d"
MODE_EXPLORE3D = "explore3d"

# Output File Names
TRAJECTORY_FILE = "trajectory.csv"
PATH_FILE_TEMPLATE = "path_{robot}.csv"
METRICS_FILE = "metrics.txt"
PLOT_FILE = "plot.svg"
MAP_FILE = "map.pgm"
VOXEL_FILE = "voxels.txt"
GRAPH_FILE = "graph.txt"
SWEEP_SUMMARY_FILE = "sweep.csv"

# Potential Field Defaults (pull and threshold scale with the spacing L)
DEFAULT_GAIN_INTERVAL = 0.8
DEFAULT_GAIN_REPULSION = 1.0
DEFAULT_GAIN_CIRCLE = 1.0
DEFAULT_ATTENUATION = 0.7
DEFAULT_PULL_PER_SPACING = 0.04
DEFAULT_THRESHOLD_PER_SPACING = 1e-3
DEFAULT_UNDER_PER_SPACING = 0.5
DEFAULT_OVER_PER_SPACING = 1.5

# Geometry
SEGMENT_SAMPLES_PER_CELL = 4
CURVATURE_TOLERANCE = 0.10

# Tangent Graph
TANGENT_WINDOW_CELLS = 3
CONTOUR_SMOOTHING_CELLS = 1.0

# Tracking
DEFAULT_SMOOTH_SLOPE_PER_SIGMA = 10.0
ORTHOGONALITY_TOLERANCE = 1e-6

# Exploration
DEFAULT_PAUSE_PER_SAMPLE = 2.0
ODOMETRY_QUADRATURE_PANELS = 64

# Depth Camera (time-of-flight sensor defaults)
TOF_MIN_RANGE = 0.0
TOF_MAX_RANGE = 9.0
TOF_FOV = math.radians(135.0)
TOF_RESOLUTION = 128

# Mapping
MAP_MARGIN_CELLS = 2
VERTICAL_SCAN_RESOLUTION = math.radians(1.0)
