from impact.management.base import ExperimentCommand
from impact.serializers import build_model_params

from ...serializers import GenerateConfigSerializer, build_design
from ...services.metaorders import generate_dataset, write_metaorders


class Command(ExperimentCommand):
    help = 'Simulate a metaorder dataset under linear schedules; writes metaorders.csv'
    config_serializer_class = GenerateConfigSerializer

    def run(self, config, out_dir, threads):
        model = build_model_params(config['model'])
        design = build_design(config['dataset'])
        records = generate_dataset(model, design, config['base_seed'], threads=threads)
        path = write_metaorders(records, out_dir / 'metaorders.csv')
        sells = sum(1 for r in records if r.is_sell)
        self.stdout.write(f"{len(records)} metaorders ({sells} sells, {len(records) - sells} buys)")
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
