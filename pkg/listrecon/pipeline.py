"""
Run orchestration behind the management commands.

``Pipeline`` ties the numerical modules to files on disk: it writes and reads the
simulation artifacts, checks hashes between event files, sidecars and
checkpoints, and produces the CSV outputs. A shared instance is exposed as
``pipeline``.
"""

import logging
import math
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numba
import numpy as np
from django.conf import settings

from .classical import ReconConfig, poisson_loglik, reconstruct
from .events import EventList
from .exceptions import (
    EmptyDataError,
    FileFormatError,
    HashMismatchError,
    InvalidConfigError,
    InvalidMetricError,
    ObjectiveSingularError,
    TrainingDivergedError,
)
from .geometry import TofSpec, build_scanner, enumerate_lor_pairs
from .images import Image2D, ImageGrid
from .io_utils import (
    content_hash,
    geometry_hash,
    read_image,
    read_lmev,
    read_sidecar,
    sidecar_path,
    write_csv,
    write_image,
    write_lmev,
    write_pgm,
    write_sidecar,
)
from .lpd import LMPDNet, NetworkConfig, lmpd_forward
from .metrics import RoiSpec, background_std, bias, cnr, crc, psnr, ssim
from .projector import ProjectionContext, back_project, forward_project, sensitivity_image, set_threads
from .runconfig import BenchRunConfig, ReconRunConfig, SimulationRunConfig, TrainRunConfig
from .simulate import SimConfig, lor_multipliers, make_phantom, sample_listmode
from .training import (
    TrainConfig,
    TrainingPair,
    load_network,
    load_training_state,
    save_network,
    save_training_state,
    train_toy,
    training_state,
)

logger = logging.getLogger(__name__)

EVENTS_FILE = 'events.lmev'
TRUTH_FILE = 'truth.img'
ATTENUATION_FILE = 'attenuation.img'
MULTIPLIERS_FILE = 'multipliers.npy'
ROIS_FILE = 'rois.npz'

BENCH_HEADER = ('operation', 'n_events', 'grid', 'threads', 'seconds', 'peak_rss_mb', 'scratch_mb')
METRICS_HEADER = ('method', 'count_level', 'tof_spec', 'metric', 'value', 'n_realizations')


def hash_hex(value: int) -> str:
    return f"{value:016x}"


@dataclass
class EventSet:
    """An event file with everything needed to reconstruct it."""

    path: Path
    events: EventList
    sidecar: dict
    ctx: ProjectionContext
    multipliers: np.ndarray = field(repr=False)

    @property
    def directory(self) -> Path:
        return self.path.parent

    @property
    def contamination_mean(self) -> float:
        return float(self.sidecar.get('contamination_mean', 0.0))

    def sensitivity(self) -> Image2D:
        return sensitivity_image(self.ctx, self.multipliers)

    def truth(self) -> Optional[Image2D]:
        path = self.directory / TRUTH_FILE
        return read_image(path) if path.is_file() else None


@dataclass
class SimulationArtifacts:
    directory: Path
    realization: int
    n_events: int
    geometry_hash: str
    noise_seed: Tuple[int, int]


@dataclass
class ReconOutput:
    image: Image2D
    image_path: Path
    csv_path: Path
    n_rows: int
    final_objective: Optional[float]
    psnr: Optional[float] = None
    ssim: Optional[float] = None


@dataclass
class TrainOutput:
    checkpoint_path: Path
    loss_csv_path: Path
    n_pairs: int
    best_epoch: int
    best_val_loss: float


def context_from_sidecar(meta: dict) -> ProjectionContext:
    g, t, grid = meta['geometry'], meta['tof'], meta['grid']
    geom = build_scanner(g['n_modules'], g['crystals_per_module'], g['ring_radius'], g['crystal_width'])
    tof = TofSpec(t['fwhm_ps'], t['n_bins'], t['bin_width'])
    return ProjectionContext(geom, ImageGrid(grid['P'], grid['Q'], grid['spacing']), tof)


def save_rois(path, masks: Dict[str, List[np.ndarray]]) -> None:
    arrays = {f"{name}_{i}": m for name, group in masks.items() for i, m in enumerate(group)}
    np.savez_compressed(path, **arrays)


def load_rois(path) -> Dict[str, List[np.ndarray]]:
    masks: Dict[str, List[np.ndarray]] = {}
    with np.load(path) as data:
        keys = sorted(data.files, key=lambda k: (k.rsplit('_', 1)[0], int(k.rsplit('_', 1)[1])))
        for key in keys:
            masks.setdefault(key.rsplit('_', 1)[0], []).append(data[key].astype(bool))
    return masks


def _finite_or_none(value):
    return value if value is not None and math.isfinite(value) else None


class Pipeline:
    """Runs the simulate / recon / train / eval / bench stages."""

    def __init__(self):
        config = settings.LISTRECON
        self.output_dir = Path(config['OUTPUT_DIR'])
        self.default_threads = config.get('THREADS', 0)

    def set_threads(self, threads: Optional[int]) -> int:
        return set_threads(threads or self.default_threads)

    # ------------------------------------------------------------------
    # simulate

    def simulate(self, cfg: SimulationRunConfig, out_dir) -> List[SimulationArtifacts]:
        """Write one subdirectory r000, r001, ... per noise realization."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        geom, tof, grid = cfg.scanner.build()
        ctx = ProjectionContext(geom, grid, tof)
        ghash = geometry_hash(geom, tof, grid)
        sim = SimConfig(target_counts=cfg.counts, tof=tof, contamination_fraction=cfg.contamination_fraction,
                        psf_fwhm=cfg.psf_fwhm, seed=cfg.seed, attenuation=cfg.attenuation)

        phantom = make_phantom(cfg.phantom, cfg.seed, grid)
        multipliers = lor_multipliers(phantom, ctx, cfg.attenuation)

        artifacts = []
        for r in range(cfg.realizations):
            if cfg.vary_phantom and r > 0:
                phantom = make_phantom(cfg.phantom, cfg.seed + r, grid)
                multipliers = lor_multipliers(phantom, ctx, cfg.attenuation)
            noise_seed = (cfg.seed, r)
            result = sample_listmode(phantom, sim, ctx, noise_seed=list(noise_seed), multipliers=multipliers)

            rdir = out_dir / f"r{r:03d}"
            rdir.mkdir(exist_ok=True)
            event_path = rdir / EVENTS_FILE
            write_lmev(event_path, result.events, ghash, tof.n_bins)
            write_image(rdir / TRUTH_FILE, phantom.activity)
            write_pgm(rdir / 'truth.pgm', phantom.activity)
            write_image(rdir / ATTENUATION_FILE, phantom.attenuation)
            np.save(rdir / MULTIPLIERS_FILE, multipliers.astype(np.float32))
            save_rois(rdir / ROIS_FILE, phantom.roi_masks)

            write_sidecar(sidecar_path(event_path), {
                'format': 'LMEV',
                'geometry': geom.as_dict(),
                'tof': tof.as_dict(),
                'grid': grid.as_dict(),
                'geometry_hash': hash_hex(ghash),
                'content_hash': content_hash(event_path),
                'seed': cfg.seed,
                'noise_seed': list(noise_seed),
                'realization': r,
                'phantom': cfg.phantom,
                'phantom_seed': phantom.seed,
                'target_counts': cfg.counts,
                'n_events': len(result.events),
                'contamination_fraction': cfg.contamination_fraction,
                'contamination_mean': result.contamination_mean,
                'lambda_scale': result.lambda_scale,
                'n_bins_total': result.n_bins_total,
                'psf_fwhm': cfg.psf_fwhm,
                'attenuation': cfg.attenuation,
                'roi_truth': phantom.truth_values(),
            })
            logger.info(f"Realization {r}: {len(result.events)} events written to {rdir}")
            artifacts.append(SimulationArtifacts(rdir, r, len(result.events), hash_hex(ghash), noise_seed))
        return artifacts

    # ------------------------------------------------------------------
    # loading

    def load_event_set(self, event_path) -> EventSet:
        """Read an event file and its sidecar and check that they belong together."""
        event_path = Path(event_path)
        events, header = read_lmev(event_path)
        side = sidecar_path(event_path)
        if not side.is_file():
            raise FileFormatError(f"{event_path}: sidecar {side.name} not found")
        meta = read_sidecar(side)

        if meta.get('content_hash') and meta['content_hash'] != content_hash(event_path):
            raise HashMismatchError(f"{event_path}: content does not match its sidecar")
        ctx = context_from_sidecar(meta)
        expected = geometry_hash(ctx.geometry, ctx.tof, ctx.grid)
        if header['geometry_hash'] != expected or meta.get('geometry_hash') != hash_hex(expected):
            raise HashMismatchError(f"{event_path}: geometry hash {hash_hex(header['geometry_hash'])} "
                                    f"does not match sidecar configuration {hash_hex(expected)}")
        if header['n_bins'] != ctx.tof.n_bins:
            raise FileFormatError(f"{event_path}: header has {header['n_bins']} TOF bins, "
                                  f"sidecar {ctx.tof.n_bins}")
        events.validate(ctx.geometry.n_crystals, ctx.tof.n_bins)

        mpath = event_path.parent / MULTIPLIERS_FILE
        if mpath.is_file():
            multipliers = np.load(mpath).astype(np.float64)
        else:
            multipliers = np.ones(enumerate_lor_pairs(ctx.geometry)[0].shape[0])
        return EventSet(event_path, events, meta, ctx, multipliers)

    # ------------------------------------------------------------------
    # recon

    def reconstruct(self, algorithm: str, event_path, run_cfg: ReconRunConfig, out_dir,
                    truth_path=None, checkpoint=None) -> ReconOutput:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        data = event_path if isinstance(event_path, EventSet) else self.load_event_set(event_path)
        if len(data.events) == 0:
            raise EmptyDataError(f"{data.path} contains no events")
        truth = read_image(truth_path) if truth_path else None
        if truth is not None:
            truth.check_grid(data.ctx.grid)

        sens = data.sensitivity()
        s = data.contamination_mean
        rows = []

        def quality(img: Image2D):
            if truth is None:
                return []
            return [psnr(img, truth), ssim(img, truth)]

        if algorithm == 'lmpd':
            image, final_objective = self._reconstruct_lmpd(data, checkpoint, sens, quality, rows)
        else:
            params = dict(run_cfg.params)
            params['contamination_mean'] = s
            params.setdefault('keep_iterates', False)
            cfg = ReconConfig.for_algorithm(algorithm, **params)

            def on_iteration(iteration, img, objective):
                rows.append([iteration, objective] + quality(img))
                if run_cfg.write_iterates:
                    write_image(out_dir / f"iter_{iteration:03d}.img", img)

            result = reconstruct(data.events, cfg, data.ctx, sens=sens, callback=on_iteration)
            image = result.image
            final_objective = result.objective[-1] if result.objective else None

        image_path = out_dir / f"{algorithm}.img"
        write_image(image_path, image)
        if run_cfg.preview:
            write_pgm(out_dir / f"{algorithm}.pgm", image)
        header = ['iteration', 'objective'] + (['psnr', 'ssim'] if truth is not None else [])
        csv_path = out_dir / f"{algorithm}_iterations.csv"
        write_csv(csv_path, header, rows)

        q = quality(image)
        return ReconOutput(
            image=image,
            image_path=image_path,
            csv_path=csv_path,
            n_rows=len(rows),
            final_objective=_finite_or_none(final_objective),
            psnr=_finite_or_none(q[0]) if q else None,
            ssim=q[1] if q else None,
        )

    def _reconstruct_lmpd(self, data: EventSet, checkpoint, sens, quality, rows):
        if checkpoint is None:
            raise InvalidConfigError("Algorithm lmpd requires --checkpoint")
        checkpoint = Path(checkpoint)
        meta_path = checkpoint.with_suffix('.json')
        if not meta_path.is_file():
            raise FileFormatError(f"{checkpoint}: network config {meta_path.name} not found")
        meta = read_sidecar(meta_path)
        if meta.get('geometry_hash') != data.sidecar.get('geometry_hash'):
            raise HashMismatchError(f"{checkpoint} was trained for geometry {meta.get('geometry_hash')}, "
                                    f"events use {data.sidecar.get('geometry_hash')}")
        config = NetworkConfig.from_dict(meta['network'])
        net = load_network(checkpoint, config)

        out = lmpd_forward(net, data.events, data.ctx)
        objective = None
        for k, phase in enumerate(out.phases, start=1):
            try:
                objective = poisson_loglik(phase, data.events, sens, data.contamination_mean, data.ctx)
            except ObjectiveSingularError:
                objective = float('nan')
            rows.append([k, objective] + quality(phase))
        return out.image, objective

    # ------------------------------------------------------------------
    # train

    def load_dataset(self, dataset_dir) -> Tuple[List[TrainingPair], str, ProjectionContext]:
        """All (event file, truth image) pairs below ``dataset_dir``, with one geometry."""
        dataset_dir = Path(dataset_dir)
        pairs = []
        ghash = None
        ctx = None
        for event_path in sorted(dataset_dir.rglob(EVENTS_FILE)):
            data = self.load_event_set(event_path)
            truth = data.truth()
            if truth is None:
                logger.warning(f"Skipping {event_path}: no {TRUTH_FILE} next to it")
                continue
            if ghash is None:
                ghash, ctx = data.sidecar['geometry_hash'], data.ctx
            elif data.sidecar['geometry_hash'] != ghash:
                raise HashMismatchError(f"{event_path}: geometry hash {data.sidecar['geometry_hash']} "
                                        f"differs from the rest of the dataset ({ghash})")
            pairs.append(TrainingPair(events=data.events, truth=truth,
                                      name=str(event_path.relative_to(dataset_dir))))
        if not pairs:
            raise EmptyDataError(f"No (event, truth) pairs found under {dataset_dir}")
        return pairs, ghash, ctx

    def train(self, dataset_dir, cfg: TrainRunConfig, out_dir, resume: bool = False) -> TrainOutput:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        pairs, ghash, ctx = self.load_dataset(dataset_dir)

        n_val = 0
        if len(pairs) > 1 and cfg.val_fraction > 0:
            n_val = max(1, int(round(cfg.val_fraction * len(pairs))))
        train, val = pairs[:len(pairs) - n_val], pairs[len(pairs) - n_val:]
        output_scale = float(max(p.truth.values.max() for p in train)) or 1.0
        net_config = NetworkConfig(n_phases=cfg.n_phases, shared_weights=cfg.shared_weights,
                                   output_scale=output_scale)
        train_cfg = TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, seed=cfg.seed)

        checkpoint_path = out_dir / 'checkpoint.lmpd'
        resume_path = out_dir / 'resume.pt'
        resume_state = None
        if resume:
            if not resume_path.is_file():
                raise InvalidConfigError(f"Nothing to resume: {resume_path} not found")
            resume_state = load_training_state(resume_path)
            if resume_state['network_config'] != net_config.as_dict():
                raise HashMismatchError(f"{resume_path} was saved with a different network configuration")

        write_sidecar(checkpoint_path.with_suffix('.json'), {
            'network': net_config.as_dict(),
            'config_hash': hash_hex(net_config.config_hash()),
            'geometry_hash': ghash,
        })

        def on_epoch(epoch, net, optimizer, partial):
            save_training_state(resume_path, training_state(epoch, net, optimizer, partial))

        logger.info(f"Training on {len(train)} pairs, validating on {len(val) or len(train)}")
        try:
            result = train_toy(train, val, ctx, net_config, train_cfg, resume_state=resume_state,
                               epoch_callback=on_epoch)
        except TrainingDivergedError as e:
            if e.checkpoint is not None:
                net = LMPDNet(net_config).double()
                net.load_state_dict(e.checkpoint)
                save_network(checkpoint_path, net)
                logger.error(f"Training diverged; last good checkpoint written to {checkpoint_path}")
            raise

        save_network(checkpoint_path, result.net)
        loss_csv = out_dir / 'losses.csv'
        write_csv(loss_csv, ('epoch', 'train_loss', 'val_loss'),
                  [[e, t, v] for e, (t, v) in enumerate(zip(result.train_losses, result.val_losses))])
        return TrainOutput(checkpoint_path, loss_csv, len(pairs), result.best_epoch, result.best_val_loss)

    # ------------------------------------------------------------------
    # eval

    def evaluate(self, runs, out_path) -> int:
        """Metrics CSV over ReconstructionRun records; returns the number of rows.

        Runs are grouped by (algorithm, count level, TOF spec, simulation) and each
        realization directory counts as one noise realization.
        """
        groups: Dict[tuple, list] = {}
        for run in runs:
            if not run.simulation_dir or not run.image_file:
                continue
            sim_root = str(Path(run.simulation_dir).parent)
            key = (run.algorithm, run.target_counts, run.tof_ps, run.n_bins, sim_root)
            groups.setdefault(key, []).append(run)
        if not groups:
            raise EmptyDataError("No successful reconstruction runs with a simulation to evaluate")

        rows = []
        for (algorithm, counts, tof_ps, n_bins, _), group in sorted(groups.items()):
            group = sorted(group, key=lambda r: r.simulation_dir)
            images = [read_image(r.image_file) for r in group]
            # each realization is scored against its own phantom
            sim_dirs = [Path(r.simulation_dir) for r in group]
            truths = [read_image(d / TRUTH_FILE) for d in sim_dirs]
            masks = [load_rois(d / ROIS_FILE) for d in sim_dirs]
            truth_values = [read_sidecar(d / 'events.json')['roi_truth'] for d in sim_dirs]
            tof_spec = f"{tof_ps:g}ps/{n_bins}"
            n = len(images)

            def emit(metric, value):
                rows.append([algorithm, counts, tof_spec, metric, value, n])

            def roi_specs(target):
                return [RoiSpec(m[target], m['background'], t[target], t['background'])
                        for m, t in zip(masks, truth_values)]

            emit('psnr', float(np.mean([psnr(img, truth) for img, truth in zip(images, truths)])))
            emit('ssim', float(np.mean([ssim(img, truth) for img, truth in zip(images, truths)])))
            emit('cnr_hot', float(np.mean([cnr(img, m['hot'][0], np.any(m['background'], axis=0))
                                           for img, m in zip(images, masks)])))
            hot = roi_specs('hot')
            # lesion uptake is the same constant in every phantom
            emit('bias_hot', bias(images, [spec.target_union for spec in hot], truth_values[0]['hot']))
            if n >= 2:
                emit('crc_hot', crc(images, hot))
                emit('crc_cold', crc(images, roi_specs('cold')))
                try:
                    emit('background_std', background_std(images, hot))
                except InvalidMetricError as e:
                    logger.warning(f"{algorithm} {counts}: background STD undefined ({e})")
            else:
                logger.warning(f"{algorithm} {counts} {tof_spec}: one realization, skipping CRC/STD")

        write_csv(out_path, METRICS_HEADER, rows)
        return len(rows)

    # ------------------------------------------------------------------
    # bench

    def bench(self, cfg: BenchRunConfig, out_path) -> List[list]:
        """Forward and back projection timings for each thread count."""
        geom, tof, grid = cfg.scanner.build()
        ctx = ProjectionContext(geom, grid, tof)
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        full = ctx.full_bin_events()
        events = full.take(rng.integers(len(full), size=cfg.n_events))
        img = Image2D(rng.random(grid.shape), grid.spacing)
        vals = rng.random(cfg.n_events)

        n_chunks = ctx.chunk_count(cfg.n_events)
        row_scratch = n_chunks * ctx.max_row_length * 16
        scratch = {
            'forward': row_scratch,
            'back': row_scratch + n_chunks * grid.n_pixels * 8,
        }
        operations = {
            'forward': lambda: forward_project(img, events, ctx),
            'back': lambda: back_project(vals, events, grid, ctx),
        }
        # compile before timing
        for op in operations.values():
            op()

        rows = []
        previous = numba.get_num_threads()
        try:
            for threads in cfg.threads:
                used = set_threads(threads)
                for name, op in operations.items():
                    best = math.inf
                    for _ in range(max(1, cfg.repeats)):
                        start = time.perf_counter()
                        op()
                        best = min(best, time.perf_counter() - start)
                    peak_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
                    rows.append([name, cfg.n_events, f"{grid.P}x{grid.Q}", used, f"{best:.6f}",
                                 f"{peak_mb:.1f}", f"{scratch[name] / 2 ** 20:.2f}"])
                    logger.info(f"{name} {cfg.n_events} events, {used} threads: {best:.4f} s")
        finally:
            set_threads(previous)

        write_csv(out_path, BENCH_HEADER, rows)
        return rows


pipeline = Pipeline()
