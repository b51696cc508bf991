"""Configuration settings for lorenz-shadow."""

import os
from pathlib import Path
from typing import Dict, Optional, Type

from dotenv import load_dotenv

# Base directory
BASE_DIR = Path(__file__).parent.parent

load_dotenv(BASE_DIR / '.env')


class Config:
    """Base configuration class."""

    DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

    # Output paths
    OUTPUT_DIR = Path(os.environ.get('LORENZ_SHADOW_OUTPUT', BASE_DIR / 'runs'))
    LOGS_DIR = BASE_DIR / 'logs'

    # Experiment defaults
    MASTER_SEED = int(os.environ.get('MASTER_SEED', 0))
    JOBS = int(os.environ.get('JOBS', 1))

    # Numerical grids
    CONDITION_GRID = 100_000
    SAMPLES_PER_STEP = 50
    PROBE_GRID = 20_001

    # Logging
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(run)s] %(message)s'

    @classmethod
    def init_dirs(cls) -> None:
        """Create the output and log directories."""
        for directory in [cls.OUTPUT_DIR, cls.LOGS_DIR]:
            Path(directory).mkdir(parents=True, exist_ok=True)


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration (long sweeps)."""
    DEBUG = False
    JOBS = int(os.environ.get('JOBS', os.cpu_count() or 1))


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    CONDITION_GRID = 10_000
    PROBE_GRID = 2_001


# Configuration mapping
config: Dict[str, Type[Config]] = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config(config_name: Optional[str] = None) -> Type[Config]:
    """Get configuration based on environment."""
    if config_name is None:
        config_name = os.environ.get('LORENZ_SHADOW_ENV', 'default')
    return config[config_name]
