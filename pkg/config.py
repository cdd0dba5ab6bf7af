import math
import os
from dotenv import load_dotenv

load_dotenv()


def _env(name, default, cast=float):
    """Read CONELAB_<name> from the environment, falling back to `default`."""
    raw = os.getenv(f"CONELAB_{name}")
    if raw is None or raw.strip() == "":
        return default
    return cast(raw)


class Config:
    LIBRARY_VERSION = "0.3.0"

    # Tolerances
    TOL = _env("TOL", 1e-9)
    EXACT_TOL = 1e-12
    ODE_TOL = _env("ODE_TOL", 1e-8)

    # Comparison sampling
    GRID = _env("GRID", 64, int)

    # Wrinkled quadrant mesh
    WRINKLED_RESOLUTION = _env("WRINKLED_RESOLUTION", 0.05)
    # coarser default for the ball-radius profile and four-point runs, which need n_max up to ~15
    WRINKLED_PROFILE_RESOLUTION = _env("WRINKLED_PROFILE_RESOLUTION", 0.2)
    WRINKLED_ROW_CACHE = _env("WRINKLED_ROW_CACHE", 256, int)

    # Sasaki geometry
    SASAKI_BASEPOINT = (0.0, 1.0)
    SASAKI_REF_ANGLE = math.pi / 2  # vertical reference vector
    SASAKI_MAX_BASE_DISTANCE = 5.0
    SASAKI_MAX_FIBER_DISTANCE = 8.0
    SHOOTING_HEADINGS = _env("SHOOTING_HEADINGS", 32, int)
    SHOOTING_ROTATIONS = _env("SHOOTING_ROTATIONS", 17, int)
    SHOOTING_COARSE_STEP = 0.05
    SHOOTING_FINE_STEP = 0.01

    # Cone verdict thresholds
    SLOPE_SUBLINEAR = _env("SLOPE_SUBLINEAR", 0.9)
    SLOPE_LINEAR = _env("SLOPE_LINEAR", 0.95)
    HALVING_RATIO = _env("HALVING_RATIO", 0.5)

    # Directories
    OUTPUT_DIR = os.getenv("CONELAB_OUTPUT_DIR", "outputs")

    # Keys a config file or the command line may override
    OVERRIDABLE = {
        "TOL": float,
        "ODE_TOL": float,
        "GRID": int,
        "WRINKLED_RESOLUTION": float,
        "WRINKLED_PROFILE_RESOLUTION": float,
        "SHOOTING_HEADINGS": int,
        "SHOOTING_ROTATIONS": int,
        "SLOPE_SUBLINEAR": float,
        "SLOPE_LINEAR": float,
        "HALVING_RATIO": float,
        "OUTPUT_DIR": str,
    }

    @classmethod
    def update_from_manager(cls, config_manager):
        """Apply every overridable setting the ConfigManager knows about"""
        for key, cast in cls.OVERRIDABLE.items():
            value = config_manager.get_setting(key)
            if value is not None:
                setattr(cls, key, cast(value))

    @classmethod
    def validate(cls):
        """Return a list of problems with the current settings"""
        problems = []

        if not 0 < cls.TOL < 1e-3:
            problems.append("TOL must lie in (0, 1e-3)")

        if cls.GRID < 2 or cls.GRID % 2:
            problems.append("GRID must be an even integer >= 2")

        if not cls.WRINKLED_RESOLUTION > 0 or not cls.WRINKLED_PROFILE_RESOLUTION > 0:
            problems.append("wrinkled mesh resolutions must be positive")

        if not cls.SLOPE_SUBLINEAR < cls.SLOPE_LINEAR:
            problems.append("SLOPE_SUBLINEAR must be below SLOPE_LINEAR")

        if not 0 < cls.HALVING_RATIO < 1:
            problems.append("HALVING_RATIO must lie in (0, 1)")

        if cls.SHOOTING_HEADINGS < 4 or cls.SHOOTING_ROTATIONS < 3:
            problems.append("shooting grid is too coarse")

        return problems
