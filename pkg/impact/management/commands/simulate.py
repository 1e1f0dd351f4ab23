import logging

from ...serializers import (
    SimulateConfigSerializer,
    build_grid,
    build_model_params,
    build_trajectory,
)
from ...services.model import expected_terminal_cash
from ...services.simulator import path_seed, run_ensemble, simulate_path
from ...utils import write_ensemble_csv, write_path_csv
from ..base import ExperimentCommand

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Simulate (q, S, X) paths and an ensemble; writes path_*.csv and ensemble.csv'
    config_serializer_class = SimulateConfigSerializer

    def run(self, config, out_dir, threads):
        model = build_model_params(config['model'])
        trajectory = build_trajectory(config['trajectory'])
        grid = build_grid(config['grid'], trajectory.T)
        ensemble = config['ensemble']
        base_seed = config['base_seed']

        for index in range(ensemble['dump_paths']):
            path = simulate_path(model, trajectory, grid, path_seed(base_seed, index))
            write_path_csv(path, out_dir / f"path_{index:04d}.csv")

        stats = run_ensemble(
            model,
            trajectory,
            grid,
            ensemble['n_paths'],
            base_seed,
            observables=ensemble['observables'],
            threads=threads,
        )
        write_ensemble_csv(stats, out_dir / 'ensemble.csv')

        closed_form = expected_terminal_cash(model, trajectory)
        self.stdout.write(f"E[X_T] closed form: {closed_form!r}")
        for name in stats.observables:
            self.stdout.write(f"{name}: mean={stats.mean[name]!r} stderr={stats.stderr[name]!r}")
        self.stdout.write(self.style.SUCCESS(f"Wrote outputs to {out_dir}"))
