import logging

from impact.management.base import ExperimentCommand
from impact.utils import write_csv

from ...serializers import ArbitrageConfigSerializer, build_bounds, build_regime
from ...services.round_trip import ALMGREN_CHRISS
from ...services.search import search_arbitrage, two_block_optimum

logger = logging.getLogger(__name__)


def _format_blocks(strategy) -> str:
    if strategy is None:
        return 'none'
    return ' '.join(f"[v={v!r}, d={d!r}]" for v, d in zip(strategy.rates, strategy.durations))


class Command(ExperimentCommand):
    help = 'Search piecewise-constant round trips for dynamic arbitrage; writes search.csv and summary.txt'
    config_serializer_class = ArbitrageConfigSerializer

    def run(self, config, out_dir, threads):
        regime = build_regime(config['regime'])
        search = config['search']
        bounds = build_bounds(search)
        n_blocks = search['n_blocks']

        result = search_arbitrage(
            regime,
            n_blocks,
            bounds,
            search['budget'],
            seed=config['base_seed'],
            n_starts=search['n_starts'],
            threads=threads,
        )

        columns = ['start_id', 'pnl', 'evaluations', 'converged']
        columns += [f"rate_{i}" for i in range(1, n_blocks + 1)]
        columns += [f"duration_{i}" for i in range(1, n_blocks + 1)]
        rows = []
        for start in result.starts:
            row = {
                'start_id': start.start_id,
                'pnl': start.pnl,
                'evaluations': start.evaluations,
                'converged': int(start.converged),
            }
            if start.strategy is not None:
                for i, (v, d) in enumerate(zip(start.strategy.rates, start.strategy.durations), start=1):
                    row[f"rate_{i}"] = v
                    row[f"duration_{i}"] = d
            rows.append(row)
        write_csv(rows, out_dir / 'search.csv', columns=columns)

        lines = [
            f"regime: {regime.kind}",
            f"best_pnl: {result.pnl!r}",
            f"evaluations: {result.evaluations}",
            f"best_strategy: {_format_blocks(result.best)}",
        ]
        if regime.kind == ALMGREN_CHRISS and regime.instantaneous.eta == 0:
            bound, optimum = two_block_optimum(regime, bounds)
            lines.append(f"two_block_optimum: {bound!r}")
            lines.append(f"two_block_strategy: {_format_blocks(optimum)}")
        (out_dir / 'summary.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')

        for line in lines:
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f"Wrote outputs to {out_dir}"))
