"""
Reconstruct an event file.

Usage:
    python manage.py recon osem runs/sim/r000/events.lmev --truth runs/sim/r000/truth.img
    python manage.py recon lmpd runs/sim/r000/events.lmev --checkpoint runs/train/checkpoint.lmpd
"""

from pathlib import Path

from listrecon.classical import ALGORITHM_DEFAULTS
from listrecon.management.base import ToolkitCommand
from listrecon.models import ReconstructionRun
from listrecon.pipeline import TRUTH_FILE, pipeline
from listrecon.runconfig import ReconRunConfig


class Command(ToolkitCommand):
    help = 'Reconstruct a list-mode event file with one of the toolkit algorithms'
    default_out = 'recon'

    def add_arguments(self, parser):
        parser.add_argument(
            'algorithm',
            choices=[choice for choice, _ in ReconstructionRun.ALGORITHM_CHOICES],
            help='Reconstruction algorithm',
        )
        parser.add_argument(
            'event_file',
            type=str,
            help='LMEV event file (its .json sidecar must sit next to it)',
        )
        parser.add_argument(
            '--truth',
            type=str,
            default=None,
            help='Truth image; adds PSNR/SSIM columns to the iteration CSV',
        )
        parser.add_argument(
            '--checkpoint',
            type=str,
            default=None,
            help='LMPD checkpoint, required for lmpd',
        )
        super().add_arguments(parser)

    def run(self, threads, /, **options):
        algorithm = options['algorithm']
        event_file = Path(options['event_file'])
        self.stdout.write(self.style.SUCCESS(f'🔄 Reconstructing {event_file} with {algorithm}...'))

        run_cfg = ReconRunConfig.load(options['config'])
        if options['seed'] is not None:
            run_cfg.params['seed'] = options['seed']
        out_dir = self.output_path(options)
        if not options['out']:
            out_dir = out_dir / event_file.parent.name

        params = dict(ALGORITHM_DEFAULTS.get(algorithm, {}))
        params.update(run_cfg.params)
        simulation_dir = event_file.parent if (event_file.parent / TRUTH_FILE).is_file() else None
        self.record = ReconstructionRun.objects.create(
            algorithm=algorithm,
            event_file=str(event_file),
            simulation_dir=str(simulation_dir) if simulation_dir else '',
            config_path=options['config'] or '',
            output_dir=str(out_dir),
            seed=params.get('seed', 0),
            threads=threads,
            n_iterations=params.get('n_iterations', 0),
            n_subsets=params.get('n_subsets', 1),
            beta=params.get('beta', 0.0),
        )

        data = pipeline.load_event_set(event_file)
        self.record.target_counts = data.sidecar.get('target_counts', 0)
        self.record.tof_ps = data.ctx.tof.fwhm_ps
        self.record.n_bins = data.ctx.tof.n_bins
        self.record.n_events = len(data.events)
        self.record.save()

        result = pipeline.reconstruct(algorithm, data, run_cfg, out_dir,
                                      truth_path=options['truth'], checkpoint=options['checkpoint'])
        fields = {
            'final_objective': result.final_objective,
            'psnr': result.psnr,
            'ssim': result.ssim,
            'image_file': str(result.image_path),
        }
        if algorithm == 'lmpd':
            fields.update(n_iterations=result.n_rows, n_subsets=1, beta=0.0)
        self.mark_success(**fields)

        self.stdout.write("\n" + "="*80)
        self.stdout.write(self.style.SUCCESS("✅ Reconstruction completed!"))
        self.stdout.write(f"   Algorithm: {self.record.get_algorithm_display()}")
        self.stdout.write(f"   Events: {self.record.n_events}")
        self.stdout.write(f"   Iterations recorded: {result.n_rows}")
        if result.final_objective is not None:
            self.stdout.write(f"   Final objective: {result.final_objective:.6e}")
        if result.psnr is not None:
            self.stdout.write(f"   PSNR: {result.psnr:.2f} dB, SSIM: {result.ssim:.4f}")
        self.stdout.write(f"   Image: {result.image_path}")
        self.stdout.write(f"   Iterations CSV: {result.csv_path}")
        self.stdout.write("="*80)
