import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.base.exceptions import ConfigurationError

from .config import apply_entries, build_run_config, parse_value
from .serializers import RunConfigSerializer

FAST = ['--rollouts', '20', '--horizon', '5', '--particles', '20', '--workers', '1',
        '--set', 'env.episode_length=5', '--set', 'env.laps=1', '--set', 'belief.svgd_iterations=2']


def call(*args):
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


class ConfigTests(SimpleTestCase):

    def test_values_parse_as_json(self):
        self.assertEqual(parse_value('0.1'), 0.1)
        self.assertEqual(parse_value('[0.01, 0.01]'), [0.01, 0.01])
        self.assertEqual(parse_value('true'), True)
        self.assertEqual(parse_value('quad2d'), 'quad2d')

    def test_dotted_keys_fold_into_fields_and_overrides(self):
        config = apply_entries({}, {
            'env.name': 'quad2d',
            'env.reference.radius': '0.4',
            'safety.delta': '0.05',
            'safety.penalty': '1e5',
            'belief.svgd_step': '0.5',
        })
        self.assertEqual(config['environment'], 'quad2d')
        self.assertEqual(config['delta'], 0.05)
        self.assertEqual(config['environment_overrides'], {'reference': {'radius': 0.4}})
        self.assertEqual(config['controller_overrides'], {'penalty': 1e5})
        self.assertEqual(config['belief_overrides'], {'svgd_step': 0.5})

    def test_unknown_key_rejected(self):
        with self.assertRaises(ConfigurationError):
            apply_entries({}, {'plots.colour': 'red'})

    def test_precedence(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'experiment.env'
            path.write_text('env.name=cartpole\nrun.trials=4\nmppi.rollouts=50\nsafety.delta=0.2\n')
            config = build_run_config(path, ['run.trials=6', 'safety.delta=0.05'], {'trials': 8, 'delta': None})
        self.assertEqual(config['environment'], 'cartpole')
        self.assertEqual(config['trials'], 8)
        self.assertEqual(config['delta'], 0.05)
        self.assertEqual(config['rollouts'], 50)
        self.assertEqual(config['preset'], 'desk')

    def test_full_preset(self):
        config = build_run_config(flags={'environment': 'quad2d', 'preset': 'full'})
        self.assertEqual((config['trials'], config['rollouts']), (100, 500))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            build_run_config('/nonexistent/experiment.env')


class RunConfigSerializerTests(SimpleTestCase):

    def validate(self, **flags):
        serializer = RunConfigSerializer(data=build_run_config(flags=flags))
        return serializer, serializer.is_valid()

    def test_samples_default_from_delta(self):
        serializer, valid = self.validate(environment='cartpole', delta=0.05)
        self.assertTrue(valid, serializer.errors)
        self.assertEqual(serializer.validated_data['samples'], 20)
        self.assertEqual(serializer.to_spec().controller_overrides['samples'], 20)

    def test_insufficient_samples_cite_bound(self):
        serializer, valid = self.validate(environment='cartpole', delta=0.1, samples=3)
        self.assertFalse(valid)
        self.assertIn('P >= ceil((1 - delta) / delta) = 9', str(serializer.errors['samples']))

    def test_unknown_environment(self):
        serializer, valid = self.validate(environment='acrobot')
        self.assertFalse(valid)
        self.assertIn('environment', serializer.errors)

    def test_unknown_controller(self):
        serializer, valid = self.validate(environment='cartpole', controller='gpmpc')
        self.assertFalse(valid)
        self.assertIn('controller', serializer.errors)

    def test_single_particle_flag_rejected(self):
        serializer, valid = self.validate(environment='cartpole', particles=1)
        self.assertFalse(valid)
        self.assertIn('particles', serializer.errors)

    def test_single_particle_override_rejected(self):
        config = build_run_config(flags={'environment': 'cartpole'})
        config['belief_overrides'] = {'particles': 1}
        serializer = RunConfigSerializer(data=config)
        self.assertFalse(serializer.is_valid())
        self.assertIn('particles', serializer.errors)

    def test_samples_override_is_kept(self):
        serializer = RunConfigSerializer(data=build_run_config(
            assignments=['mppi.samples=30'], flags={'environment': 'cartpole'}))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['samples'], 30)
        self.assertEqual(serializer.to_spec().controller_overrides['samples'], 30)

    def test_samples_flag_beats_override(self):
        serializer = RunConfigSerializer(data=build_run_config(
            assignments=['mppi.samples=30'], flags={'environment': 'cartpole', 'samples': 40}))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_spec().controller_overrides['samples'], 40)

    def test_adagrad_schedule_accepted(self):
        serializer = RunConfigSerializer(data=build_run_config(
            assignments=['belief.svgd_schedule=adagrad', 'belief.svgd_step=0.05'], flags={'environment': 'cartpole'}))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_spec().belief_overrides['svgd_schedule'], 'adagrad')

    def test_unknown_schedule_rejected(self):
        serializer = RunConfigSerializer(data=build_run_config(
            assignments=['belief.svgd_schedule=rmsprop'], flags={'environment': 'cartpole'}))
        self.assertFalse(serializer.is_valid())
        self.assertIn('belief_overrides', serializer.errors)

    def test_delta_range(self):
        serializer, valid = self.validate(environment='cartpole', delta=1.5)
        self.assertFalse(valid)
        self.assertIn('delta', serializer.errors)


class CommandTests(SimpleTestCase):

    def test_validate_accepts_valid_config(self):
        output = call('validate', '--env', 'quad2d', '--controller', 'oracle')
        self.assertIn('Configuration is valid', output)

    def test_validate_rejects_too_few_samples(self):
        with self.assertRaises(CommandError) as raised:
            call('validate', '--env', 'cartpole', '--delta', '0.1', '--samples', '3')
        payload = json.loads(str(raised.exception))
        self.assertEqual(payload['code'], 'validation_error')
        self.assertIn('= 9', payload['errors']['samples'][0])

    def test_missing_environment_is_usage_error(self):
        with self.assertRaises(CommandError):
            call('run', '--controller', 'prmppi')

    def test_missing_config_file(self):
        with self.assertRaises(CommandError):
            call('validate', '--config', '/nonexistent/experiment.env')

    def test_run_is_byte_identical_on_repeat(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            for directory in (first, second):
                call('run', '--env', 'cartpole', '--controller', 'prmppi', '--trials', '2', '--seed', '7',
                     '--output', directory, *FAST)
            names = sorted(path.name for path in Path(first).iterdir())
            self.assertIn('trial_7.csv', names)
            self.assertIn('trial_8.csv', names)
            self.assertIn('belief_7_lap1.csv', names)
            for name in names:
                if name != 'timings.json':
                    self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes(), name)

    def test_oracle_summary_has_no_accuracy_row(self):
        with tempfile.TemporaryDirectory() as directory:
            call('run', '--env', 'quad2d', '--controller', 'oracle', '--trials', '1', '--output', directory, *FAST)
            summary = json.loads((Path(directory) / 'summary.json').read_text())
            self.assertIn('RMSE', summary['table'])
            self.assertIn('SR', summary['table'])
            self.assertNotIn('PA (%)', summary['table'])
            self.assertNotIn('pa', summary)

    def test_table_renders_stored_summaries(self):
        with tempfile.TemporaryDirectory() as directory:
            for variant in ('oracle', 'prmppi'):
                call('run', '--env', 'quad2d', '--controller', variant, '--trials', '1',
                     '--output', str(Path(directory) / variant), *FAST)
            table = call('table', directory)
        lines = table.strip().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertIn('PA (%)', lines[0])
        self.assertTrue(lines[1].split()[1] == 'oracle' and lines[1].rstrip().endswith('-'))
        self.assertEqual(lines[2].split()[1], 'prmppi')

    def test_table_without_summaries(self):
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(CommandError):
                call('table', directory)
