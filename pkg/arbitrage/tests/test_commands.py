import pandas as pd
from django.core.management.base import CommandError

from impact.management.base import EXIT_CONFIG
from impact.tests.test_commands import CommandTestCase


def arbitrage_config(regime, **search):
    config = {
        'base_seed': 5,
        'regime': regime,
        'search': {
            'n_blocks': 2,
            'budget': 200,
            'n_starts': 4,
            'rate_min': 0.1,
            'rate_max': 10.0,
            'duration_min': 0.05,
            'duration_max': 2.0,
        },
    }
    config['search'].update(search)
    return config


def read_summary(out):
    lines = (out / 'summary.txt').read_text(encoding='utf-8').splitlines()
    return dict(line.split(': ', 1) for line in lines)


class ArbitrageCommandTests(CommandTestCase):
    def test_concave_impact_report(self):
        out, stdout = self.run_command('arbitrage', arbitrage_config({'kind': 'almgren_chriss', 'kv': 1.0, 'gamma': 0.5}))
        search = pd.read_csv(out / 'search.csv')
        self.assertEqual(
            list(search.columns),
            ['start_id', 'pnl', 'evaluations', 'converged', 'rate_1', 'rate_2', 'duration_1', 'duration_2'],
        )
        self.assertEqual(list(search['start_id']), [0, 1, 2, 3])
        self.assertLessEqual(search['evaluations'].sum(), 200)

        summary = read_summary(out)
        self.assertEqual(summary['regime'], 'almgren_chriss')
        self.assertAlmostEqual(float(summary['best_pnl']), search['pnl'].max(), places=12)
        self.assertGreater(float(summary['two_block_optimum']), 6.67)
        self.assertLessEqual(float(summary['best_pnl']), float(summary['two_block_optimum']) + 1e-9)
        self.assertIn('best_pnl', stdout)

    def test_linear_impact_report(self):
        config = arbitrage_config({'kind': 'almgren_chriss', 'kv': 1.0, 'gamma': 1.0}, n_blocks=3, budget=400)
        out, _ = self.run_command('arbitrage', config)
        summary = read_summary(out)
        self.assertLessEqual(float(summary['best_pnl']), 1e-9)
        self.assertIn('rate_3', pd.read_csv(out / 'search.csv').columns)

    def test_cumulative_volume_report(self):
        regime = {'kind': 'cumulative_volume', 'k': 1.0, 'alpha': 0.5, 'eta': 0.1, 'beta': 0.5}
        out, _ = self.run_command('arbitrage', arbitrage_config(regime))
        summary = read_summary(out)
        self.assertEqual(summary['regime'], 'cumulative_volume')
        self.assertLessEqual(float(summary['best_pnl']), 0.0)
        self.assertNotIn('two_block_optimum', summary)

    def test_reversed_rate_bounds_exit_with_config_error(self):
        config = arbitrage_config({'kind': 'almgren_chriss', 'kv': 1.0, 'gamma': 0.5}, rate_min=5.0, rate_max=1.0)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('arbitrage', config)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('search', str(ctx.exception))

    def test_regime_keys_depend_on_kind(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('arbitrage', arbitrage_config({'kind': 'cumulative_volume', 'k': 1.0}))
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('regime.alpha', str(ctx.exception))

    def test_budget_must_cover_every_start(self):
        config = arbitrage_config({'kind': 'almgren_chriss', 'kv': 1.0, 'gamma': 0.5}, budget=10, n_starts=5)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('arbitrage', config)
        self.assertIn('search.budget', str(ctx.exception))
