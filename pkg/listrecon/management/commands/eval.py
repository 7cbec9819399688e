"""
Compute image-quality metrics over the recorded reconstructions.

Usage:
    python manage.py eval --out runs/metrics.csv
"""

from listrecon.management.base import ToolkitCommand
from listrecon.models import ReconstructionRun
from listrecon.pipeline import pipeline


class Command(ToolkitCommand):
    help = 'Write PSNR/SSIM/CRC/STD/bias/CNR for every method and count level'
    default_out = 'metrics.csv'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--algorithm',
            type=str,
            default=None,
            help='Only evaluate this algorithm',
        )

    def run(self, threads, /, **options):
        self.stdout.write(self.style.SUCCESS('🔄 Evaluating reconstructions...'))
        runs = ReconstructionRun.objects.filter(status='success').exclude(simulation_dir='')
        if options['algorithm']:
            runs = runs.filter(algorithm=options['algorithm'])
        out_path = self.output_path(options)
        out_path.parent.mkdir(parents=True, exist_ok=True)

        n_rows = pipeline.evaluate(runs, out_path)

        self.stdout.write("\n" + "="*80)
        self.stdout.write(self.style.SUCCESS("✅ Evaluation completed!"))
        self.stdout.write(f"   Reconstructions: {runs.count()}")
        self.stdout.write(f"   Metric rows: {n_rows}")
        self.stdout.write(f"   Output: {out_path}")
        self.stdout.write("="*80)
