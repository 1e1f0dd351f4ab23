from ...serializers import (
    VerifyCovarianceConfigSerializer,
    build_grid,
    build_model_params,
    build_trajectory,
)
from ...services.simulator import covariance_sensitivity
from ...utils import write_csv
from ..base import ExperimentCommand

COLUMNS = ['delta', 'entry', 'empirical', 'theoretical', 'relative_error', 'n']


class Command(ExperimentCommand):
    help = 'Compare the Monte Carlo covariance of the estimation residuals with the closed form'
    config_serializer_class = VerifyCovarianceConfigSerializer

    def run(self, config, out_dir, threads):
        model = build_model_params(config['model'])
        trajectory = build_trajectory(config['trajectory'])
        grid = build_grid(config['grid'], trajectory.T)
        deltas = [grid.delta] + [d for d in config.get('covariance', {}).get('deltas', []) if d != grid.delta]

        reports = covariance_sensitivity(
            model,
            trajectory,
            grid,
            deltas,
            config['ensemble']['n_paths'],
            config['base_seed'],
            threads=threads,
        )
        rows = [row for report in reports for row in report.rows()]
        write_csv(rows, out_dir / 'covariance.csv', columns=COLUMNS)

        for report in reports:
            status = 'ok' if report.within_tolerance() else 'outside tolerance'
            self.stdout.write(
                f"delta={report.delta!r}: empirical={report.empirical.tolist()} "
                f"theoretical={report.theoretical.tolist()} ({status})"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote outputs to {out_dir}"))
