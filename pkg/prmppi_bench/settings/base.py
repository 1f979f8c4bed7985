"""
Django settings for the prmppi_bench project.

Shared across environments; development.py and production.py import
everything from here and override what they need.

Every constant the controller, the estimators and the benchmark
environments need but the method itself leaves open lives in the
PRMPPI_* dictionaries below, so a run is fully described by these
settings plus the experiment file passed to `manage.py run`.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'prmppi-bench-local')

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

DJANGO_APPS = [
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'apps.base',
    'apps.dynamics',
    'apps.belief',
    'apps.safety',
    'apps.mppi',
    'apps.prmppi',
    'apps.simlab',
    'apps.cli',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# No models are stored.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

TIME_ZONE = 'UTC'
USE_TZ = True

# Logging

LOG_DIR = Path(os.getenv('PRMPPI_LOG_DIR', BASE_DIR / 'logs'))
LOG_DIR.mkdir(parents=True, exist_ok=True)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'prmppi.log',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        'apps': {
            'level': 'WARNING',
            'handlers': ['console', 'file'],
            'propagate': False,
        },
    },
}

# Celery Configuration
CELERY_BROKER_URL = os.getenv('REDIS_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = os.getenv('REDIS_URL', 'redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
CELERY_RESULT_EXTENDED = True
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'True') == 'True'

# Trial pool: 'process' (concurrent.futures) or 'celery' (group of run_trial tasks)
PRMPPI_TRIAL_BACKEND = os.getenv('PRMPPI_TRIAL_BACKEND', 'process')

PRMPPI_RESULTS_DIR = Path(os.getenv('PRMPPI_RESULTS_DIR', BASE_DIR / 'results'))

# Run presets. Desk scale finishes on a laptop CPU in minutes;
# full scale mirrors the published study.
PRMPPI_PRESETS = {
    'desk': {
        'trials': 20,
        'rollouts': 200,
    },
    'full': {
        'trials': 100,
        'rollouts': 500,
    },
}

PRMPPI_CONTROLLER_DEFAULTS = {
    'delta': 0.1,
    'samples': None,           # None -> ceil(1 / delta)
    'horizon': 50,             # K; control sequences hold K - 1 steps
    'rollouts': 200,           # M per branch
    'parallel_branches': False,
}

PRMPPI_BELIEF_DEFAULTS = {
    'particles': 100,
    'svgd_step': 1.0,
    'svgd_iterations': 10,
    'svgd_schedule': 'preconditioned',  # or 'adagrad' (pair with svgd_step=0.05)
    'bandwidth_floor': 1e-4,   # fraction of the parameter box width
    'kde_shrinkage': True,
    'ukf_process_noise': 1e-6,  # fraction of the prior variance per step
    'sir_resample_threshold': 0.5,
}

# Benchmark environments. Boxes are [low, high] per parameter.
PRMPPI_ENVIRONMENTS = {
    'cartpole': {
        'model': 'cartpole',
        'model_options': {
            'dt': 0.02,
            'pole_half_length': 0.5,
            'force_limit': 10.0,
        },
        'prior_box': [[0.9, 1.1], [0.09, 0.11]],
        'initial_state': [1.0, 0.0, 0.0, 0.0],
        'episode_length': 250,
        'laps': 3,
        'reference': {'kind': 'setpoint', 'target': [0.0, 0.0, 0.0, 0.0]},
        'safe_set': {'kind': 'cartpole_half_plane'},
        'state_limits': [5.0, 20.0, 1.5, 50.0],
        'position_indices': [0],
        'cost': {
            'state_weights': [1.0, 0.1, 10.0, 0.1],
            'control_weights': [1e-3],
            'terminal_scale': 10.0,
        },
        'observation_noise_std': [1e-3, 1e-2, 1e-3, 1e-2],
        'process_noise_std': [0.0, 0.0, 0.0, 0.0],
        'controller': {
            'control_std': [2.0],
            'beta': 1.0,
            'robust_beta': 0.02,
            'penalty': 1e6,
        },
    },
    'quad2d': {
        'model': 'quad2d',
        'model_options': {
            'dt': 0.02,
            'arm_length': 0.028,
            'thrust_max': 0.3,
        },
        'prior_box': [[0.0135, 0.0405], [0.7e-5, 2.1e-5]],
        'initial_state': None,     # start on the reference
        'episode_length': 300,
        'laps': 3,
        'reference': {'kind': 'circle', 'radius': 0.5, 'center': [0.0, 1.0], 'period': 6.0},
        'safe_set': {'kind': 'height_band', 'z_min': 0.6, 'z_max': 1.6},
        'state_limits': [3.0, 3.0, 10.0, 10.0, 1.5, 50.0],
        'floor': 0.0,
        'position_indices': [0, 1],
        'cost': {
            'state_weights': [10.0, 10.0, 0.5, 0.5, 0.1, 0.01],
            'control_weights': [1.0, 1.0],
            'terminal_scale': 5.0,
        },
        'observation_noise_std': [1e-3, 1e-3, 1e-2, 1e-2, 1e-3, 1e-2],
        'process_noise_std': [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        'controller': {
            'control_std': [0.01, 0.01],
            'beta': 0.5,
            'robust_beta': 0.02,
            'penalty': 1e6,
        },
    },
    'quad2d_partial': {
        'extends': 'quad2d',
        'sensing_radius': 0.4,
    },
    'quad_payload': {
        'model': 'quad_payload',
        'model_options': {
            'dt': 0.02,
            'accel_limit': 5.0,
        },
        'prior_box': [[0.3, 0.9], [0.0, 0.1], [0.0, 0.1]],
        'initial_state': None,
        'episode_length': 600,
        'laps': 3,
        'reference': {'kind': 'square', 'side': 1.5, 'origin': [0.0, 0.0], 'height': 1.2, 'period': 12.0},
        'safe_set': {
            'kind': 'obstacles',
            'clearance': 0.05,
            'floor': 0.0,
            # O1 is flown below, O2 above, O3 around
            'boxes': [
                [[0.6, -0.25, 1.35], [0.9, 0.25, 2.5]],
                [[1.25, 0.6, 0.0], [1.75, 0.9, 0.45]],
                [[0.6, 1.3, 0.0], [0.9, 1.7, 2.5]],
            ],
        },
        'state_limits': [4.0, 4.0, 4.0, 1.4, 1.4, 10.0, 10.0, 10.0, 20.0, 20.0],
        'position_indices': [0, 1, 2],
        'cost': {
            'state_weights': [10.0, 10.0, 10.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.05, 0.05],
            'control_weights': [0.01, 0.01, 0.01],
            'terminal_scale': 5.0,
        },
        'observation_noise_std': [1e-3] * 5 + [1e-2] * 5,
        'process_noise_std': [0.0] * 10,
        'controller': {
            'control_std': [1.0, 1.0, 1.0],
            'beta': 1.0,
            'robust_beta': 0.02,
            'penalty': 1e6,
        },
    },
    'quad_payload_length': {
        'extends': 'quad_payload',
        'model': 'quad_payload_length',
        'prior_box': [[0.3, 0.9]],
    },
}
