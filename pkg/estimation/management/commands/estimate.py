import logging

from impact.management.base import ExperimentCommand
from impact.utils import write_csv

from ...serializers import EstimateConfigSerializer
from ...services.fitting import DECOMPOSITION_COLUMNS, estimate
from ...services.metaorders import read_metaorders

logger = logging.getLogger(__name__)

FIT_COLUMNS = ['pipeline', 'parameter', 'estimate', 'stderr']
RESIDUAL_COLUMNS = ['id', 'eps1', 'eps2', 'z1', 'z2', *DECOMPOSITION_COLUMNS]


class Command(ExperimentCommand):
    help = 'Fit permanent and instantaneous impact from a metaorder CSV; writes fit.csv, residuals.csv, summary.txt'
    config_serializer_class = EstimateConfigSerializer

    def run(self, config, out_dir, threads):
        fit = config['fit']
        records = read_metaorders(fit['input'])
        report = estimate(records, alpha=fit.get('alpha'), misspecified_alpha=fit['misspecified_alpha'])

        write_csv(report.rows(), out_dir / 'fit.csv', columns=FIT_COLUMNS)
        write_csv(report.residuals.rows(), out_dir / 'residuals.csv', columns=RESIDUAL_COLUMNS)
        lines = report.summary_lines()
        (out_dir / 'summary.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')

        for line in lines:
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f"Wrote outputs to {out_dir}"))
