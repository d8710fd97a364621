"""
Run configuration.

One TOML file fully determines a run:

    seed = 7

    [synth]                 # or [data] with prices / characteristics / rf paths
    n_assets = 50
    n_periods = 500

    [hyperparams]
    lambda_a = 0.95

    [grid]
    active_models = ["full", "value_size"]
    [grid.axes]
    gamma_a = [10.0, 50.0]

    [split]
    is_fraction = 0.6

    [output]
    dir = "out"
    plots = false

Unknown tables and keys are errors. Relative data paths resolve against the
config file's directory.
"""

import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .analysis.evaluate import GridSpec, SplitSpec
from .errors import ConfigError, DataError
from .model.data import build_factor_portfolios, load_panel
from .model.hyperparams import HyperParams
from .model.synth import GeneratorSpec, generate

logger = logging.getLogger(__name__)

TABLES = ('seed', 'data', 'synth', 'hyperparams', 'grid', 'split', 'output')


@dataclass
class DataPaths:
    prices: Path
    characteristics: Path
    rf: Path


@dataclass
class RunConfig:
    """
    Attributes:
        data: CSV inputs (exclusive with synth)
        synth: Synthetic market parameters
        hyperparams: Configuration of a single backtest and the grid's base values
        grid: Grid for calibration (None when absent)
        split: IS/OOS split and folds
        output_dir: Root of the artifact tree
        plots: Write PNG figures
        seed: Seed of the synthetic market
        source: File the configuration was read from
    """
    data: Optional[DataPaths] = None
    synth: Optional[GeneratorSpec] = None
    hyperparams: HyperParams = field(default_factory=HyperParams)
    grid: Optional[GridSpec] = None
    split: SplitSpec = field(default_factory=SplitSpec)
    output_dir: Path = Path("out")
    plots: bool = False
    seed: int = 0
    source: Optional[Path] = None

    def __post_init__(self):
        if (self.data is None) == (self.synth is None):
            raise ConfigError("exactly one of [data] or [synth] is required", path=self.source)

    def to_dict(self) -> dict:
        """Canonical content of the run (paths as strings; output location excluded)."""
        out = {
            'seed': self.seed,
            'hyperparams': self.hyperparams.to_dict(),
            'split': asdict(self.split),
        }
        if self.data is not None:
            out['data'] = {k: str(v) for k, v in asdict(self.data).items()}
        if self.synth is not None:
            out['synth'] = {
                f.name: (getattr(self.synth, f.name).tolist() if hasattr(getattr(self.synth, f.name), 'tolist')
                         else getattr(self.synth, f.name))
                for f in fields(self.synth)
            }
        if self.grid is not None:
            out['grid'] = {'axes': self.grid.axes, 'active_models': list(self.grid.active_models)}
        return out

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def with_seed(self, seed: int) -> "RunConfig":
        synth = replace(self.synth, seed=seed) if self.synth is not None else None
        return replace(self, seed=seed, synth=synth)

    def artifact_dir(self, out: Optional[Path] = None) -> Path:
        """<out>/<digest>/"""
        return Path(out if out is not None else self.output_dir) / self.digest()

    def build_market(self):
        """
        Panel and factor returns of the run.

        Returns:
            (AssetPanel, FactorSeries, GeneratorTruth or None)
        """
        if self.synth is not None:
            return generate(self.synth)
        panel = load_panel(self.data.prices, self.data.characteristics, self.data.rf)
        return panel, build_factor_portfolios(panel), None


def _check_keys(table: dict, allowed, name: str, path):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", field=name, path=path)


def _build(cls, values: dict, name: str, path):
    try:
        return cls(**values)
    except ConfigError as exc:
        raise type(exc)(exc.message, field=f"{name}.{exc.field}" if exc.field else name, path=path) from exc
    except TypeError as exc:
        raise ConfigError(str(exc), field=name, path=path) from exc


def parse_config(raw: dict, source: Optional[Path] = None) -> RunConfig:
    """Build a RunConfig from a parsed TOML document."""
    _check_keys(raw, TABLES, 'config', source)
    base_dir = source.parent if source is not None else Path(".")
    seed = raw.get('seed', 0)
    if not isinstance(seed, int):
        raise ConfigError(f"must be an integer, got {seed!r}", field='seed', path=source)

    data = None
    if 'data' in raw:
        table = raw['data']
        _check_keys(table, ('prices', 'characteristics', 'rf'), 'data', source)
        missing = {'prices', 'characteristics', 'rf'} - set(table)
        if missing:
            raise ConfigError(f"missing key(s) {sorted(missing)}", field='data', path=source)
        data = DataPaths(**{k: (base_dir / v) for k, v in table.items()})

    synth = None
    if 'synth' in raw:
        table = dict(raw['synth'])
        _check_keys(table, [f.name for f in fields(GeneratorSpec)], 'synth', source)
        table.setdefault('seed', seed)
        synth = _build(GeneratorSpec, table, 'synth', source)

    hp_table = raw.get("hyperparams", {})
    _check_keys(hp_table, [f.name for f in fields(HyperParams)], "hyperparams", source)
    hyperparams = _build(HyperParams, hp_table, "hyperparams", source)

    grid = None
    if 'grid' in raw:
        table = raw['grid']
        _check_keys(table, ('axes', 'active_models', 'full_scale'), 'grid', source)
        if table.get('full_scale', False):
            grid = GridSpec.full_scale(hyperparams)
        else:
            grid = _build(GridSpec, {
                'axes': dict(table.get('axes', {})),
                'active_models': list(table.get('active_models', [hyperparams.active_model])),
                'base': hyperparams,
            }, 'grid', source)

    split_table = raw.get('split', {})
    _check_keys(split_table, [f.name for f in fields(SplitSpec)], 'split', source)
    split = _build(SplitSpec, split_table, 'split', source)

    output = raw.get('output', {})
    _check_keys(output, ('dir', 'plots'), 'output', source)

    return RunConfig(
        data=data,
        synth=synth,
        hyperparams=hyperparams,
        grid=grid,
        split=split,
        output_dir=base_dir / output['dir'] if 'dir' in output else Path('out'),
        plots=bool(output.get('plots', False)),
        seed=seed,
        source=source,
    )


def load_config(path) -> RunConfig:
    """
    Read and validate a TOML run file.

    Raises:
        DataError: file missing or unreadable
        ConfigError: invalid TOML, unknown keys or out-of-domain values
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: config file not found")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", path=path) from exc
    config = parse_config(raw, path)
    logger.info("Loaded config %s (digest %s)", path, config.digest())
    return config
