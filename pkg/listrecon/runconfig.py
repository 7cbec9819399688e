"""
Run configuration files.

Files are ``key = value`` lines with ``#`` comments, read with python-dotenv so
the same syntax as the project's .env files applies. Each command validates its
file into a dataclass; a missing required key raises InvalidConfigError naming it.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from django.conf import settings
from dotenv import dotenv_values

from .exceptions import InvalidConfigError
from .geometry import ScannerGeometry, TofSpec, build_scanner
from .images import ImageGrid

logger = logging.getLogger(__name__)

TRUE_VALUES = ('1', 'true', 'yes', 'on')
FALSE_VALUES = ('0', 'false', 'no', 'off')


class ConfigValues:
    """Typed access to the raw key/value pairs of one file."""

    def __init__(self, values: Dict[str, Optional[str]], source: str = '<config>'):
        self.values = {k.strip().lower(): v for k, v in values.items()}
        self.source = source

    @classmethod
    def load(cls, path) -> 'ConfigValues':
        path = Path(path)
        if not path.is_file():
            raise InvalidConfigError(f"Config file not found: {path}")
        return cls(dotenv_values(path), str(path))

    def _raw(self, key, required):
        value = self.values.get(key)
        if value is None or value.strip() == '':
            if required:
                raise InvalidConfigError(f"{self.source}: missing required key '{key}'")
            return None
        return value.strip()

    def _convert(self, key, default, required, cast, kind):
        raw = self._raw(key, required)
        if raw is None:
            return default
        try:
            return cast(raw)
        except ValueError as e:
            raise InvalidConfigError(f"{self.source}: key '{key}' must be {kind}, got '{raw}'") from e

    def get_int(self, key, default=None, required=False) -> int:
        # accept 1e5-style counts
        return self._convert(key, default, required, lambda r: int(float(r)) if 'e' in r.lower() else int(r),
                             'an integer')

    def get_float(self, key, default=None, required=False) -> float:
        return self._convert(key, default, required, float, 'a number')

    def get_str(self, key, default=None, required=False) -> str:
        return self._convert(key, default, required, str, 'a string')

    def get_bool(self, key, default=False, required=False) -> bool:
        def cast(raw):
            if raw.lower() in TRUE_VALUES:
                return True
            if raw.lower() in FALSE_VALUES:
                return False
            raise ValueError(raw)
        return self._convert(key, default, required, cast, 'true or false')

    def get_int_list(self, key, default=None) -> Tuple[int, ...]:
        return self._convert(key, default, False,
                             lambda r: tuple(int(v) for v in r.replace(';', ',').split(',') if v.strip()),
                             'a comma-separated list of integers')


@dataclass
class ScannerConfig:
    n_modules: int = 28
    crystals_per_module: int = 16
    crystal_width: float = 4.0
    ring_radius: float = 350.0
    grid_size: int = 128
    spacing: float = 2.086
    tof_ps: float = 200.0
    n_bins: int = 17
    bin_width: Optional[float] = None

    def build(self) -> Tuple[ScannerGeometry, TofSpec, ImageGrid]:
        geom = build_scanner(self.n_modules, self.crystals_per_module, self.ring_radius, self.crystal_width)
        grid = ImageGrid(P=self.grid_size, Q=self.grid_size, spacing=self.spacing)
        fov = min(settings.LISTRECON['FOV_DIAMETER'], grid.P * grid.spacing)
        if self.bin_width is None:
            tof = TofSpec.for_bins(self.tof_ps, self.n_bins, fov)
        else:
            tof = TofSpec(self.tof_ps, self.n_bins, self.bin_width)
        return geom, tof, grid

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _scanner(cv: ConfigValues, tof_required: bool) -> ScannerConfig:
    return ScannerConfig(
        n_modules=cv.get_int('n_modules', 28),
        crystals_per_module=cv.get_int('crystals_per_module', 16),
        crystal_width=cv.get_float('crystal_width', 4.0),
        ring_radius=cv.get_float('ring_radius', settings.LISTRECON['RING_RADIUS']),
        grid_size=cv.get_int('grid_size', 128),
        spacing=cv.get_float('spacing', 2.086),
        tof_ps=cv.get_float('tof_ps', 200.0, required=tof_required),
        n_bins=cv.get_int('n_bins', 17, required=tof_required),
        bin_width=cv.get_float('bin_width'),
    )


@dataclass
class SimulationRunConfig:
    counts: int
    seed: int
    phantom: str
    scanner: ScannerConfig
    contamination_fraction: float = 0.20
    psf_fwhm: float = 4.0
    attenuation: bool = True
    realizations: int = 1
    vary_phantom: bool = False

    @classmethod
    def load(cls, path) -> 'SimulationRunConfig':
        cv = ConfigValues.load(path)
        cfg = cls(
            counts=cv.get_int('counts', required=True),
            seed=cv.get_int('seed', required=True),
            phantom=cv.get_str('phantom', required=True),
            scanner=_scanner(cv, tof_required=True),
            contamination_fraction=cv.get_float('contamination_fraction', 0.20),
            psf_fwhm=cv.get_float('psf_fwhm', 4.0),
            attenuation=cv.get_bool('attenuation', True),
            realizations=cv.get_int('realizations', 1),
            vary_phantom=cv.get_bool('vary_phantom', False),
        )
        if cfg.realizations < 1:
            raise InvalidConfigError(f"{path}: realizations must be >= 1")
        return cfg


@dataclass
class ReconRunConfig:
    params: Dict[str, object] = field(default_factory=dict)
    write_iterates: bool = False
    preview: bool = True

    @classmethod
    def load(cls, path=None) -> 'ReconRunConfig':
        if path is None:
            return cls()
        cv = ConfigValues.load(path)
        params = {}
        for key in ('n_iterations', 'n_subsets', 'tv_inner_iterations', 'seed'):
            value = cv.get_int(key)
            if value is not None:
                params[key] = value
        for key in ('beta', 'gamma', 'rho', 'epsilon_floor', 'tv_step_scale', 'tv_delta_scale',
                    'divergence_factor'):
            value = cv.get_float(key)
            if value is not None:
                params[key] = value
        if cv.get_str('precondition') is not None:
            params['precondition'] = cv.get_bool('precondition')
        return cls(params=params, write_iterates=cv.get_bool('write_iterates', False),
                   preview=cv.get_bool('preview', True))


@dataclass
class TrainRunConfig:
    epochs: int
    learning_rate: float = 1e-3
    seed: int = 0
    n_phases: int = 4
    shared_weights: bool = False
    val_fraction: float = 0.2

    @classmethod
    def load(cls, path) -> 'TrainRunConfig':
        cv = ConfigValues.load(path)
        cfg = cls(
            epochs=cv.get_int('epochs', required=True),
            learning_rate=cv.get_float('learning_rate', 1e-3),
            seed=cv.get_int('seed', 0),
            n_phases=cv.get_int('n_phases', 4),
            shared_weights=cv.get_bool('shared_weights', False),
            val_fraction=cv.get_float('val_fraction', 0.2),
        )
        if not 0 <= cfg.val_fraction < 1:
            raise InvalidConfigError(f"{path}: val_fraction must be in [0, 1)")
        return cfg


@dataclass
class BenchRunConfig:
    scanner: ScannerConfig
    n_events: int = 100000
    threads: Tuple[int, ...] = (1, 2, 4, 8)
    repeats: int = 3
    seed: int = 0

    @classmethod
    def load(cls, path=None) -> 'BenchRunConfig':
        if path is None:
            return cls(scanner=ScannerConfig(ring_radius=settings.LISTRECON['RING_RADIUS']))
        cv = ConfigValues.load(path)
        return cls(
            scanner=_scanner(cv, tof_required=False),
            n_events=cv.get_int('n_events', 100000),
            threads=cv.get_int_list('threads', (1, 2, 4, 8)),
            repeats=cv.get_int('repeats', 3),
            seed=cv.get_int('seed', 0),
        )
