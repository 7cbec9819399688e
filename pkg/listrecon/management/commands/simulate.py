"""
Simulate list-mode realizations of a phantom.

Usage:
    python manage.py simulate --config sim.cfg --out runs/sim
"""

from listrecon.management.base import ToolkitCommand
from listrecon.models import SimulationRun
from listrecon.pipeline import pipeline
from listrecon.runconfig import SimulationRunConfig


class Command(ToolkitCommand):
    help = 'Simulate TOF list-mode events from a phantom'
    config_required = True
    default_out = 'simulation'

    def run(self, threads, /, **options):
        self.stdout.write(self.style.SUCCESS('🔄 Starting simulation...'))
        cfg = SimulationRunConfig.load(options['config'])
        if options['seed'] is not None:
            cfg.seed = options['seed']
        out_dir = self.output_path(options)

        self.record = SimulationRun.objects.create(
            config_path=options['config'],
            output_dir=str(out_dir),
            seed=cfg.seed,
            threads=threads,
            phantom=cfg.phantom,
            target_counts=cfg.counts,
            tof_ps=cfg.scanner.tof_ps,
            n_bins=cfg.scanner.n_bins,
        )
        artifacts = pipeline.simulate(cfg, out_dir)

        first, rest = artifacts[0], artifacts[1:]
        self.mark_success(
            output_dir=str(first.directory),
            n_events=first.n_events,
            geometry_hash=first.geometry_hash,
            event_file=str(first.directory / 'events.lmev'),
        )
        for art in rest:
            SimulationRun.objects.create(
                status='success',
                config_path=options['config'],
                output_dir=str(art.directory),
                seed=cfg.seed,
                threads=threads,
                phantom=cfg.phantom,
                target_counts=cfg.counts,
                tof_ps=cfg.scanner.tof_ps,
                n_bins=cfg.scanner.n_bins,
                realization=art.realization,
                n_events=art.n_events,
                geometry_hash=art.geometry_hash,
                event_file=str(art.directory / 'events.lmev'),
            )

        for art in artifacts:
            self.stdout.write(f"   r{art.realization:03d}: {art.n_events} events")

        self.stdout.write("\n" + "="*80)
        self.stdout.write(self.style.SUCCESS("✅ Simulation completed!"))
        self.stdout.write(f"   Phantom: {cfg.phantom}")
        self.stdout.write(f"   Target counts: {cfg.counts}")
        self.stdout.write(f"   TOF: {cfg.scanner.tof_ps:g} ps, {cfg.scanner.n_bins} bins")
        self.stdout.write(f"   Realizations: {len(artifacts)}")
        self.stdout.write(f"   Geometry hash: {first.geometry_hash}")
        self.stdout.write(f"   Output: {out_dir}")
        self.stdout.write("="*80)
