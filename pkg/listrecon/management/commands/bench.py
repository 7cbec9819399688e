"""
Time forward and back projection for several thread counts.

Usage:
    python manage.py bench --out runs/bench.csv
"""

from listrecon.management.base import ToolkitCommand
from listrecon.pipeline import pipeline
from listrecon.runconfig import BenchRunConfig


class Command(ToolkitCommand):
    help = 'Benchmark the list-mode projector'
    default_out = 'bench.csv'

    def run(self, threads, /, **options):
        self.stdout.write(self.style.SUCCESS('🔄 Benchmarking projector...'))
        cfg = BenchRunConfig.load(options['config'])
        if options['seed'] is not None:
            cfg.seed = options['seed']
        if options['threads']:
            cfg.threads = (options['threads'],)
        out_path = self.output_path(options)
        out_path.parent.mkdir(parents=True, exist_ok=True)

        rows = pipeline.bench(cfg, out_path)

        self.stdout.write("\n" + "="*80)
        self.stdout.write(self.style.SUCCESS("✅ Benchmark completed!"))
        for operation, n_events, grid, used, seconds, *_ in rows:
            self.stdout.write(f"   {operation:8s} {n_events} events on {grid}, {used} threads: {seconds} s")
        self.stdout.write(f"   Output: {out_path}")
        self.stdout.write("="*80)
