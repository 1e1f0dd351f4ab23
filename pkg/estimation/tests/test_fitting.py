from dataclasses import replace

from django.test import SimpleTestCase

from estimation.exceptions import IdentificationError
from estimation.services.fitting import estimate, fit_instantaneous, fit_permanent
from estimation.services.metaorders import DatasetDesign, generate_dataset, mirrored, percentage_decomposition, scaled
from impact.services.model import InstantaneousImpact, ModelParams, PermanentImpact


def model(sigma, alpha=0.5, beta=0.6):
    return ModelParams(
        sigma=sigma,
        S0=100.0,
        X0=0.0,
        permanent=PermanentImpact(k=1.0, alpha=alpha),
        instantaneous=InstantaneousImpact(eta=0.1, beta=beta),
    )


def design(n_orders):
    return DatasetDesign(n_orders=n_orders, q0_min=1.0, q0_max=100.0, T_min=0.5, T_max=2.0)


class NoiselessRecoveryTests(SimpleTestCase):
    def test_recovers_all_four_parameters(self):
        records = generate_dataset(model(0.0), design(50), base_seed=1)
        with self.assertLogs('estimation.services.fitting', level='WARNING'):
            report = estimate(records, misspecified_alpha=None)
        self.assertAlmostEqual(report.permanent.estimate('k'), 1.0, places=6)
        self.assertAlmostEqual(report.permanent.estimate('alpha'), 0.5, places=6)
        self.assertAlmostEqual(report.instantaneous.estimate('eta'), 0.1, places=6)
        self.assertAlmostEqual(report.instantaneous.estimate('beta'), 0.6, places=6)
        self.assertIsNone(report.misspecified_instantaneous)
        self.assertIsNone(report.eta_bias_in_stderrs)

    def test_linear_permanent_impact(self):
        records = generate_dataset(model(0.0, alpha=1.0), design(30), base_seed=2)
        permanent = fit_permanent(records)
        self.assertAlmostEqual(permanent.estimate('alpha'), 1.0, places=6)
        self.assertAlmostEqual(permanent.estimate('k'), 1.0, places=6)

    def test_fixed_exponent(self):
        records = generate_dataset(model(0.0), design(20), base_seed=3)
        permanent = fit_permanent(records, alpha=0.5)
        self.assertEqual(permanent.estimate('alpha'), 0.5)
        self.assertEqual(permanent.stderr('alpha'), 0.0)
        self.assertEqual(permanent.fixed, ('alpha',))
        self.assertAlmostEqual(permanent.estimate('k'), 1.0, places=9)


class IdentificationTests(SimpleTestCase):
    def test_one_order_size_cannot_identify_the_exponent(self):
        same_size = DatasetDesign(n_orders=20, q0_min=10.0, q0_max=10.0, T_min=0.5, T_max=2.0)
        records = generate_dataset(model(0.1), same_size, base_seed=4)
        with self.assertRaises(IdentificationError):
            fit_permanent(records)

    def test_needs_three_records(self):
        records = generate_dataset(model(0.1), design(2), base_seed=4)
        with self.assertRaises(IdentificationError):
            fit_permanent(records)
        with self.assertRaises(IdentificationError):
            fit_instantaneous(records, 0.5)

    def test_mixed_volatilities(self):
        records = generate_dataset(model(0.1), design(10), base_seed=4)
        records[3] = replace(records[3], sigma=0.0)
        with self.assertRaises(IdentificationError):
            fit_permanent(records)


class NoisyEstimationTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.records = generate_dataset(model(0.5), design(1600), base_seed=7, threads=2)

    def test_estimates_within_standard_errors(self):
        report = estimate(self.records[:400])
        for fit, truth in ((report.permanent, (1.0, 0.5)), (report.instantaneous, (0.1, 0.6))):
            for name, value in zip(fit.names, truth):
                self.assertLess(abs(fit.estimate(name) - value), 5 * fit.stderr(name), name)

    def test_standard_errors_shrink_with_sample_size(self):
        small = fit_permanent(self.records[:100])
        large = fit_permanent(self.records)
        self.assertLess(large.stderr('k'), small.stderr('k') / 2)
        self.assertLess(large.stderr('alpha'), small.stderr('alpha') / 2)

    def test_standardized_residuals(self):
        residuals = estimate(self.records, misspecified_alpha=None).residuals
        self.assertTrue(0.85 < residuals.variance_z1 < 1.15, residuals.variance_z1)
        self.assertTrue(0.85 < residuals.variance_z2 < 1.15, residuals.variance_z2)
        self.assertAlmostEqual(residuals.correlation, residuals.expected_correlation, delta=0.1)
        self.assertAlmostEqual(residuals.correlation_band, 3.0 / 40.0)
        self.assertEqual(len(residuals.rows()), 1600)

    def test_residual_rows_carry_the_percentage_split(self):
        report = estimate(self.records[:50], misspecified_alpha=None)
        alpha = report.permanent.estimate('alpha')
        for record, row in zip(self.records[:50], report.residuals.rows()):
            expected = percentage_decomposition(record, alpha)
            self.assertEqual(row['id'], record.id)
            self.assertEqual((row['slippage_pct'], row['price_return_pct'], row['cumulative_impact_pct']), expected)

    def test_price_scale_invariance(self):
        base = estimate(self.records[:200], misspecified_alpha=None)
        doubled = estimate(scaled(self.records[:200], 2.0), misspecified_alpha=None)
        self.assertAlmostEqual(doubled.permanent.estimate('alpha'), base.permanent.estimate('alpha'), places=6)
        self.assertAlmostEqual(doubled.permanent.estimate('k') / base.permanent.estimate('k'), 2.0, places=5)
        self.assertAlmostEqual(doubled.instantaneous.estimate('beta'), base.instantaneous.estimate('beta'), places=5)
        self.assertAlmostEqual(doubled.instantaneous.estimate('eta') / base.instantaneous.estimate('eta'), 2.0, places=4)

    def test_mirror_invariance(self):
        base = estimate(self.records[:200], misspecified_alpha=None)
        flipped = estimate(mirrored(self.records[:200]), misspecified_alpha=None)
        for name in ('k', 'alpha'):
            self.assertAlmostEqual(flipped.permanent.estimate(name), base.permanent.estimate(name), places=6)
        for name in ('eta', 'beta'):
            self.assertAlmostEqual(flipped.instantaneous.estimate(name), base.instantaneous.estimate(name), places=5)


class MisspecificationTests(SimpleTestCase):
    def test_linear_assumption_biases_eta(self):
        records = generate_dataset(model(0.05), design(400), base_seed=9)
        report = estimate(records, misspecified_alpha=1.0)
        self.assertEqual(report.misspecified_permanent.fixed, ('alpha',))
        self.assertEqual(report.misspecified_instantaneous.alpha_used, 1.0)
        self.assertGreater(report.eta_bias_in_stderrs, 3.0)
        pipelines = [row['pipeline'] for row in report.rows()]
        self.assertEqual(pipelines, ['estimated'] * 4 + ['misspecified'] * 4)
        self.assertTrue(any(line.startswith('misspecified eta bias') for line in report.summary_lines()))


class AcceptanceDesignTests(SimpleTestCase):
    """Frozen design: 10^4 orders, q0 log-uniform on [0.5, 8], T on [0.5, 2], lag 0.1."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        params = ModelParams(
            sigma=0.2,
            S0=100.0,
            X0=0.0,
            permanent=PermanentImpact(k=1.0, alpha=0.5),
            instantaneous=InstantaneousImpact(eta=0.1, beta=0.7),
        )
        frozen = DatasetDesign(n_orders=10000, q0_min=0.5, q0_max=8.0, T_min=0.5, T_max=2.0, delta=0.1)
        cls.records = generate_dataset(params, frozen, base_seed=0, threads=4)
        cls.report = estimate(cls.records)

    def test_recovery_tolerances(self):
        permanent, instantaneous = self.report.permanent, self.report.instantaneous
        self.assertAlmostEqual(permanent.estimate('alpha'), 0.5, delta=0.05)
        self.assertAlmostEqual(permanent.estimate('k'), 1.0, delta=0.05)
        self.assertAlmostEqual(instantaneous.estimate('beta'), 0.7, delta=0.1)
        self.assertAlmostEqual(instantaneous.estimate('eta'), 0.1, delta=0.01)

    def test_linear_assumption_biases_eta(self):
        self.assertGreater(self.report.eta_bias_in_stderrs, 3.0)

    def test_error_decreases_with_sample_size(self):
        errors = [abs(fit_permanent(self.records[:n]).estimate('alpha') - 0.5) for n in (100, 1000, 10000)]
        self.assertGreater(errors[0], errors[1])
        self.assertGreater(errors[1], errors[2])

    def test_residual_check_flags_only_the_misspecified_fit(self):
        self.assertFalse(self.report.residuals.misspecification_detected)
        misspecified = self.report.misspecified_residuals
        self.assertTrue(misspecified.misspecification_detected)
        self.assertGreater(abs(misspecified.regressor_correlation), misspecified.correlation_band)
        self.assertAlmostEqual(misspecified.correlation_band, 0.03)

        lines = self.report.summary_lines()
        self.assertIn('misspecified residual misspecification_detected: True', lines)
        self.assertIn('residual misspecification_detected: False', lines)

    def test_no_misspecified_residuals_without_that_pipeline(self):
        report = estimate(self.records[:500], misspecified_alpha=None)
        self.assertIsNone(report.misspecified_residuals)
        self.assertFalse(any(line.startswith('misspecified') for line in report.summary_lines()))
