import json
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from .exceptions import ConfigurationError, ContractViolation, InsufficientSamples, IntegrationBlowup
from .utils.io import atomic_write_frame, atomic_write_json, atomic_write_text
from .utils.renderers import render_exception
from .utils.validators import validate_count, validate_probability, validate_spd


class AtomicWriteTests(SimpleTestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_frame_keeps_full_precision(self):
        value = 0.1 + 0.2
        path = atomic_write_frame(self.root / 'nested' / 'trial.csv', pd.DataFrame({'x': [value, 1e-300]}))
        restored = pd.read_csv(path, float_precision='round_trip')
        self.assertEqual(restored['x'].tolist(), [value, 1e-300])

    def test_failed_write_leaves_no_partial_file(self):
        target = self.root / 'summary.json'
        atomic_write_text(target, 'old\n')
        with mock.patch('apps.base.utils.io.os.replace', side_effect=OSError('disk full')):
            with self.assertRaises(OSError):
                atomic_write_text(target, 'new\n')
        self.assertEqual(target.read_text(), 'old\n')
        self.assertEqual(sorted(path.name for path in self.root.iterdir()), ['summary.json'])

    def test_json_is_sorted_and_stable(self):
        first = atomic_write_json(self.root / 'a.json', {'b': 1, 'a': [1.5, None]}).read_bytes()
        second = atomic_write_json(self.root / 'b.json', {'a': [1.5, None], 'b': 1}).read_bytes()
        self.assertEqual(first, second)
        self.assertEqual(json.loads(first), {'a': [1.5, None], 'b': 1})


class RenderExceptionTests(SimpleTestCase):

    def test_domain_error(self):
        payload = render_exception(ConfigurationError('Unknown model', name='pendulum'))
        self.assertEqual(payload, {'error': 'Unknown model', 'code': 'configuration_error',
                                   'details': {'name': 'pendulum'}})

    def test_array_details_are_dropped(self):
        payload = render_exception(IntegrationBlowup('blew up', state=np.ones(3)))
        self.assertEqual(payload['code'], 'integration_blowup')
        self.assertNotIn('details', payload)

    def test_insufficient_samples_cites_bound(self):
        payload = render_exception(InsufficientSamples(3, 0.1, 10, 9))
        self.assertEqual(payload['details']['minimum'], 9)
        self.assertIn('P >= ceil((1 - delta) / delta) = 9', payload['error'])

    def test_validation_error(self):
        payload = render_exception(ValidationError({'samples': ['too few']}))
        self.assertEqual(payload, {'errors': {'samples': ['too few']}, 'code': 'validation_error'})

    def test_plain_exception(self):
        self.assertEqual(render_exception(OSError('disk full')), {'error': 'disk full', 'code': 'error'})


class ValidatorTests(SimpleTestCase):

    def test_probability(self):
        self.assertEqual(validate_probability(0.1), 0.1)
        for value in (0.0, 1.0, -0.5):
            with self.assertRaises(ContractViolation):
                validate_probability(value)

    def test_count(self):
        self.assertEqual(validate_count(5.0, 'samples'), 5)
        with self.assertRaises(ContractViolation):
            validate_count(2.5, 'samples')
        with self.assertRaises(ContractViolation):
            validate_count(1, 'horizon', minimum=2)

    def test_spd(self):
        np.testing.assert_array_equal(validate_spd([[2.0]], 'noise'), [[2.0]])
        with self.assertRaises(ContractViolation):
            validate_spd([[1.0, 2.0], [2.0, 1.0]], 'noise')
        with self.assertRaises(ContractViolation):
            validate_spd([[1.0, 0.1], [0.0, 1.0]], 'noise')
