"""
Train the unrolled list-mode network on simulated data.

Usage:
    python manage.py train runs/sim --config train.cfg --out runs/train
    python manage.py train runs/sim --config train.cfg --out runs/train --resume
"""

from listrecon.management.base import ToolkitCommand
from listrecon.models import TrainingRun
from listrecon.pipeline import pipeline
from listrecon.runconfig import TrainRunConfig


class Command(ToolkitCommand):
    help = 'Train the learned primal-dual network on (event file, truth image) pairs'
    config_required = True
    default_out = 'train'

    def add_arguments(self, parser):
        parser.add_argument(
            'dataset_dir',
            type=str,
            help='Directory searched recursively for events.lmev files with truth.img next to them',
        )
        parser.add_argument(
            '--resume',
            action='store_true',
            help='Continue from resume.pt in the output directory',
        )
        super().add_arguments(parser)

    def run(self, threads, /, **options):
        self.stdout.write(self.style.SUCCESS('🔄 Starting training...'))
        cfg = TrainRunConfig.load(options['config'])
        if options['seed'] is not None:
            cfg.seed = options['seed']
        out_dir = self.output_path(options)

        self.record = TrainingRun.objects.create(
            dataset_dir=options['dataset_dir'],
            config_path=options['config'],
            output_dir=str(out_dir),
            seed=cfg.seed,
            threads=threads,
            epochs=cfg.epochs,
            n_phases=cfg.n_phases,
        )
        result = pipeline.train(options['dataset_dir'], cfg, out_dir, resume=options['resume'])
        self.mark_success(
            n_pairs=result.n_pairs,
            best_epoch=result.best_epoch,
            best_val_loss=result.best_val_loss,
            checkpoint_file=str(result.checkpoint_path),
        )

        self.stdout.write("\n" + "="*80)
        self.stdout.write(self.style.SUCCESS("✅ Training completed!"))
        self.stdout.write(f"   Pairs: {result.n_pairs}")
        self.stdout.write(f"   Epochs: {cfg.epochs}")
        self.stdout.write(f"   Best epoch: {result.best_epoch} (validation MSE {result.best_val_loss:.6e})")
        self.stdout.write(f"   Checkpoint: {result.checkpoint_path}")
        self.stdout.write(f"   Losses: {result.loss_csv_path}")
        self.stdout.write("="*80)
