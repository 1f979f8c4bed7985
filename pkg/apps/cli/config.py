"""Experiment files, command-line flags and their merge into one run configuration.

An experiment file is a flat ``KEY=VALUE`` file read with python-dotenv.
Keys are dotted paths::

    env.name=quad2d
    env.episode_length=150
    env.reference.radius=0.4
    controller.variant=prmppi
    safety.delta=0.1
    mppi.rollouts=200
    mppi.control_std=[0.01, 0.01]
    belief.particles=100
    run.trials=20

Values are parsed as JSON when possible and kept as strings otherwise.
Precedence, lowest first: preset, experiment file, ``--set`` assignments,
dedicated flags.
"""
import json
from pathlib import Path

from django.conf import settings
from dotenv import dotenv_values

from apps.base.exceptions import ConfigurationError

# Dotted keys that map onto a RunConfig field of their own.
FIELD_KEYS = {
    'env.name': 'environment',
    'controller.variant': 'controller',
    'safety.delta': 'delta',
    'safety.samples': 'samples',
    'belief.particles': 'particles',
    'mppi.rollouts': 'rollouts',
    'mppi.horizon': 'horizon',
    'run.seed': 'seed',
    'run.trials': 'trials',
    'run.output': 'output',
    'run.preset': 'preset',
    'run.workers': 'workers',
    'run.log_steps': 'log_steps',
}

# Remaining keys under these prefixes are passed through as overrides.
OVERRIDE_PREFIXES = {
    'env': 'environment_overrides',
    'mppi': 'controller_overrides',
    'safety': 'controller_overrides',
    'belief': 'belief_overrides',
}


def parse_value(text):
    if not isinstance(text, str):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(assignment):
    key, separator, value = assignment.partition('=')
    if not separator or not key.strip():
        raise ConfigurationError(f'Expected key=value, got {assignment!r}.', assignment=assignment)
    return key.strip(), value.strip()


def read_experiment_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f'Experiment file {path} does not exist.', path=str(path))
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def _nest(target, dotted, value):
    *parents, leaf = dotted.split('.')
    for parent in parents:
        target = target.setdefault(parent, {})
    target[leaf] = value


def apply_entries(config, entries):
    """Fold dotted ``entries`` into ``config`` in place."""
    for key, raw in entries.items():
        value = parse_value(raw)
        if key in FIELD_KEYS:
            config[FIELD_KEYS[key]] = value
            continue
        prefix, _, rest = key.partition('.')
        if prefix not in OVERRIDE_PREFIXES or not rest:
            raise ConfigurationError(f'Unknown configuration key {key!r}.', key=key)
        _nest(config.setdefault(OVERRIDE_PREFIXES[prefix], {}), rest, value)
    return config


def build_run_config(config_path=None, assignments=(), flags=None, preset=None):
    """Merge preset, experiment file, ``--set`` assignments and flags.

    Args:
        flags: explicit flag values keyed by RunConfig field; ``None`` values
            are treated as not given.

    Returns:
        The raw (unvalidated) configuration dictionary.
    """
    flags = {key: value for key, value in (flags or {}).items() if value is not None}
    config = {}
    if config_path:
        apply_entries(config, read_experiment_file(config_path))
    apply_entries(config, dict(parse_assignment(item) for item in assignments))

    preset = flags.get('preset') or config.get('preset') or preset or 'desk'
    if preset not in settings.PRMPPI_PRESETS:
        raise ConfigurationError(f'Unknown preset {preset!r}; expected one of {sorted(settings.PRMPPI_PRESETS)}.')
    for key, value in settings.PRMPPI_PRESETS[preset].items():
        config.setdefault(key, value)
    config.update(flags)
    config['preset'] = preset
    return config


def add_run_arguments(parser):
    """Flags shared by the run and validate commands."""
    parser.add_argument('--config', help='Experiment file with dotted KEY=VALUE entries')
    parser.add_argument('--env', dest='environment', help='Environment name (env.name)')
    parser.add_argument('--controller', help='Controller variant (controller.variant)')
    parser.add_argument('--trials', type=int, help='Number of trials (run.trials)')
    parser.add_argument('--seed', type=int, help='Base seed; trial i uses seed + i (run.seed)')
    parser.add_argument('--delta', type=float, help='Violation probability delta (safety.delta)')
    parser.add_argument('--samples', type=int, help='Parameter samples P per step (safety.samples)')
    parser.add_argument('--particles', type=int, help='Belief particle count (belief.particles)')
    parser.add_argument('--rollouts', type=int, help='Rollouts M per branch (mppi.rollouts)')
    parser.add_argument('--horizon', type=int, help='Horizon K in states (mppi.horizon)')
    parser.add_argument('--output', help='Output directory (run.output)')
    parser.add_argument('--preset', choices=sorted(settings.PRMPPI_PRESETS), help='Desk or full scale defaults')
    parser.add_argument('--workers', type=int, help='Worker processes; defaults to the available cores')
    parser.add_argument(
        '--log-steps',
        action='store_const',
        const=True,
        help='Log per-step diagnostics (large)',
    )
    parser.add_argument(
        '--set',
        dest='assignments',
        action='append',
        default=[],
        metavar='KEY=VALUE',
        help='Override any dotted configuration key; repeatable',
    )


FLAG_FIELDS = (
    'environment', 'controller', 'trials', 'seed', 'delta', 'samples', 'particles',
    'rollouts', 'horizon', 'output', 'preset', 'workers', 'log_steps',
)


def config_from_options(options):
    flags = {field: options.get(field) for field in FLAG_FIELDS}
    return build_run_config(options.get('config'), options.get('assignments') or (), flags)
