import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.apps import apps
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

import impactlab
from impact.management.base import EXIT_CONFIG
from impact.serializers import SimulateConfigSerializer, flatten_errors


def simulate_config(**overrides):
    config = {
        'base_seed': 7,
        'model': {'k': 1.0, 'alpha': 0.5, 'sigma': 0.0, 'S0': 100.0},
        'trajectory': {'kind': 'linear', 'q0': 1.0, 'T': 1.0},
        'grid': {'n_steps': 16, 'cash_scheme': 'exact'},
        'ensemble': {'n_paths': 4, 'dump_paths': 1},
    }
    config.update(overrides)
    return config


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, config, name='config.json'):
        path = self.root / name
        path.write_text(json.dumps(config), encoding='utf-8')
        return path

    def run_command(self, name, config, out='out', **options):
        stdout = StringIO()
        call_command(
            name,
            config=str(self.write_config(config)),
            out=str(self.root / out),
            stdout=stdout,
            stderr=StringIO(),
            **options,
        )
        return self.root / out, stdout.getvalue()


class SimulateCommandTests(CommandTestCase):
    def test_noiseless_path_ends_on_closed_form(self):
        out, stdout = self.run_command('simulate', simulate_config())
        path = pd.read_csv(out / 'path_0000.csv')
        self.assertEqual(list(path.columns), ['t', 'q', 'S', 'X'])
        self.assertAlmostEqual(path['X'].iloc[-1], 100.0 - 2.0 / 3.0, places=10)
        ensemble = pd.read_csv(out / 'ensemble.csv')
        self.assertEqual(list(ensemble.columns), ['observable', 'mean', 'stderr', 'n'])
        self.assertIn('closed form', stdout)

    def test_resolved_config_is_written(self):
        out, _ = self.run_command('simulate', simulate_config(), seed=99, threads=2)
        resolved = json.loads((out / 'resolved_config.json').read_text(encoding='utf-8'))
        self.assertEqual(resolved['schema_version'], 1)
        self.assertEqual(resolved['toolkit_version'], impactlab.__version__)
        self.assertEqual(resolved['command'], 'simulate')
        self.assertEqual(resolved['threads'], 2)
        self.assertEqual(resolved['config']['base_seed'], 99)
        # defaults are filled in
        self.assertEqual(resolved['config']['model']['A'], 0.0)
        self.assertEqual(resolved['config']['grid']['delta'], 0.0)

    def test_outputs_are_deterministic(self):
        config = simulate_config(model={'k': 1.0, 'alpha': 0.5, 'sigma': 0.3})
        config['ensemble'] = {'n_paths': 50, 'dump_paths': 2}
        first, _ = self.run_command('simulate', config, out='first', threads=1)
        second, _ = self.run_command('simulate', config, out='second', threads=3)
        for name in ('path_0000.csv', 'path_0001.csv', 'ensemble.csv'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_missing_key_exits_with_config_error(self):
        config = simulate_config(model={'alpha': 0.5, 'sigma': 0.0})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('model.k', str(ctx.exception))

    def test_unknown_key_exits_with_config_error(self):
        config = simulate_config(grid={'n_steps': 4, 'dt': 0.1})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('grid.dt', str(ctx.exception))

    def test_unreadable_config(self):
        path = self.root / 'broken.json'
        path.write_text('{"base_seed": ', encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            call_command('simulate', config=str(path), out=str(self.root / 'out'), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_invalid_model_parameters(self):
        config = simulate_config(model={'k': 1.0, 'alpha': 1.5, 'sigma': 0.0})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('alpha', str(ctx.exception))


class ConfigSerializerTests(SimpleTestCase):
    def test_knots_need_times_and_inventory(self):
        config = simulate_config(trajectory={'kind': 'knots', 'times': [0.0, 1.0]})
        serializer = SimulateConfigSerializer(data=config)
        self.assertFalse(serializer.is_valid())
        self.assertIn('trajectory.inventory: This field is required.', flatten_errors(serializer.errors))

    def test_non_finite_numbers_are_rejected(self):
        config = simulate_config(model={'k': float('nan'), 'alpha': 0.5, 'sigma': 0.0})
        serializer = SimulateConfigSerializer(data=config)
        self.assertFalse(serializer.is_valid())
        self.assertTrue(any(line.startswith('model.k:') for line in flatten_errors(serializer.errors)))

    def test_seed_range(self):
        serializer = SimulateConfigSerializer(data=simulate_config(base_seed=-1))
        self.assertFalse(serializer.is_valid())
        serializer = SimulateConfigSerializer(data=simulate_config(base_seed=2 ** 64 - 1))
        self.assertTrue(serializer.is_valid(), serializer.errors)


class VerifyCovarianceCommandTests(CommandTestCase):
    def test_report_per_lag(self):
        config = simulate_config(
            model={'k': 1.0, 'alpha': 1.0, 'sigma': 1.0},
            grid={'n_steps': 50},
            ensemble={'n_paths': 500},
            covariance={'deltas': [0.0, 0.5]},
        )
        out, stdout = self.run_command('verify-covariance', config)
        report = pd.read_csv(out / 'covariance.csv')
        self.assertEqual(
            list(report.columns), ['delta', 'entry', 'empirical', 'theoretical', 'relative_error', 'n']
        )
        self.assertEqual(sorted(set(report['delta'])), [0.0, 0.5])
        var_eps2 = report[(report['delta'] == 0.0) & (report['entry'] == 'var_eps2')]
        self.assertAlmostEqual(var_eps2['theoretical'].iloc[0], 1.0 / 12.0, places=12)
        self.assertIn('delta=0.0', stdout)

    def test_requires_liquidation(self):
        config = simulate_config(trajectory={'kind': 'knots', 'times': [0.0, 1.0], 'inventory': [1.0, 0.5]})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('verify-covariance', config)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('trajectory', str(ctx.exception))


class ThreadOptionTests(CommandTestCase):
    def test_zero_threads_is_a_config_error(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', simulate_config(), threads=0)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('--threads', str(ctx.exception))

    def test_default_thread_count(self):
        out, _ = self.run_command('simulate', simulate_config())
        resolved = json.loads((out / 'resolved_config.json').read_text(encoding='utf-8'))
        self.assertEqual(resolved['threads'], settings.IMPACTLAB['THREADS'])


class InstalledAppsTests(SimpleTestCase):
    def test_validation_runs_without_auth_apps(self):
        self.assertFalse(apps.is_installed('django.contrib.auth'))
        self.assertFalse(apps.is_installed('django.contrib.contenttypes'))
        self.assertTrue(SimulateConfigSerializer(data=simulate_config()).is_valid())
