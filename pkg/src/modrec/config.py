"""Flat ``key = value`` run configuration shared by every CLI command.

Blank lines and ``#`` comments are ignored; lists are comma separated.
Resolution order is built-in defaults, then the config file, then any
command-line overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .channel import ChannelParams, SNR_LEVELS
from .dataset import GenerationConfig, SplitSpec
from .modem import CLASS_NAMES, ModemConfig
from .neuralnet.train import TrainConfig

MODELS = ("cnn", "cnn2", "dnn-feat", "knn1", "gnb", "tree", "svm")
NEURAL = ("cnn", "cnn2", "dnn-feat")


class ConfigError(ValueError):
    """Bad config text or value; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _intlist(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _strlist(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


# key -> (parser, help)
_KEYS = {
    # dataset
    "classes": (_strlist, "comma list of class names"),
    "snrs": (_intlist, "comma list of SNR levels in dB (even values in [-20, 20])"),
    "signals_per_cell": (int, "source signals per (class, SNR) cell"),
    "windows_per_signal": (int, "128-sample windows cut from each source signal"),
    "step": (int, "window shift in samples"),
    "seed": (int, "master seed for generation"),
    "workers": (int, "worker processes for generation"),
    # channel
    "cfo_walk_std": (float, "carrier frequency random-walk step (rad/sample)"),
    "cfo_init_max": (float, "max initial carrier offset (cycles/sample)"),
    "clk_walk_std": (float, "sample-clock ratio random-walk step"),
    "clk_init_max": (float, "max initial sample-clock ratio offset"),
    "n_taps": (int, "multipath taps"),
    "pdp_decay": (float, "exponential power-delay-profile constant (taps)"),
    "max_doppler": (float, "normalized Doppler of tap variation (cycles/sample)"),
    "fading": (_bool, "enable multipath fading"),
    # modem
    "sps": (int, "samples per symbol"),
    "rrc_beta": (float, "RRC excess bandwidth"),
    "rrc_span": (int, "RRC span in symbols"),
    "fsk_mod_index": (float, "FSK modulation index"),
    "fm_deviation": (float, "WBFM deviation as a fraction of Nyquist"),
    "am_depth": (float, "AM modulation depth"),
    "hilbert_taps": (int, "odd Hilbert FIR length for SSB"),
    "silence_duty": (float, "fraction of silent audio blocks (WBFM, AM-DSB)"),
    # split
    "train_frac": (float, "training fraction of source signals per cell"),
    "val_frac": (float, "validation fraction"),
    "test_frac": (float, "test fraction"),
    "split_seed": (int, "seed of the train/val/test split"),
    # features
    "standardize": (_bool, "z-score expert features with training-split statistics"),
    # model
    "model": (str, "one of " + ", ".join(MODELS)),
    "dtype": (str, "network float type: float32 or float64"),
    "batch_size": (int, "minibatch size"),
    "learning_rate": (float, "Adam step size"),
    "beta1": (float, "Adam first-moment decay"),
    "beta2": (float, "Adam second-moment decay"),
    "eps": (float, "Adam epsilon"),
    "max_epochs": (int, "training epochs"),
    "patience": (int, "early-stop patience in epochs (0 disables)"),
    "time_budget": (float, "training wall-clock cap in seconds (0 = none)"),
    "train_seed": (int, "seed for init, shuffling and dropout"),
    "dropout": (_opt_float, "override dropout rate of the chosen network"),
    "tree_max_depth": (int, "decision tree depth limit"),
    "tree_min_leaf": (int, "decision tree minimum leaf size"),
    "svm_c": (float, "SVM box constraint"),
    "svm_gamma": (_opt_float, "RBF width (auto = 1/n_features)"),
    # evaluation
    "confusion_snrs": (_intlist, "SNR levels that get a confusion CSV"),
    "bench_repetitions": (int, "timed repetitions per benchmark row"),
    "bench_models": (_strlist, "models timed by the bench command"),
    "out_dir": (str, "output directory (empty = $MODREC_OUT or ./runs)"),
}


@dataclass(frozen=True)
class RunConfig:
    classes: tuple = tuple(CLASS_NAMES)
    snrs: tuple = SNR_LEVELS
    signals_per_cell: int = 200
    windows_per_signal: int = 20
    step: int = 64
    seed: int = 0
    workers: int = 1
    cfo_walk_std: float = 1e-4
    cfo_init_max: float = 0.01
    clk_walk_std: float = 1e-6
    clk_init_max: float = 5e-5
    n_taps: int = 4
    pdp_decay: float = 1.5
    max_doppler: float = 0.001
    fading: bool = True
    sps: int = 8
    rrc_beta: float = 0.35
    rrc_span: int = 40
    fsk_mod_index: float = 0.5
    fm_deviation: float = 0.375
    am_depth: float = 0.8
    hilbert_taps: int = 129
    silence_duty: float = 0.1
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    split_seed: int = 0
    standardize: bool = True
    model: str = "cnn"
    dtype: str = "float32"
    batch_size: int = 1024
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 60
    patience: int = 0
    time_budget: float = 0.0
    train_seed: int = 0
    dropout: float | None = None
    tree_max_depth: int = 16
    tree_min_leaf: int = 4
    svm_c: float = 1.0
    svm_gamma: float | None = None
    confusion_snrs: tuple = (-6, 0, 18)
    bench_repetitions: int = 5
    bench_models: tuple = ("knn1", "gnb", "tree", "svm", "dnn-feat", "cnn")
    out_dir: str = ""

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        for m in self.bench_models:
            if m not in MODELS:
                raise ConfigError(f"unknown bench model {m!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        for c in self.classes:
            if c not in CLASS_NAMES:
                raise ConfigError(f"unknown class {c!r}")

    # -- views onto the module configs --
    def channel(self) -> ChannelParams:
        return ChannelParams(self.cfo_walk_std, self.cfo_init_max, self.clk_walk_std,
                             self.clk_init_max, self.n_taps, self.pdp_decay, self.max_doppler,
                             fading=self.fading)

    def modem(self) -> ModemConfig:
        return ModemConfig(self.sps, self.rrc_beta, self.rrc_span, self.fsk_mod_index,
                           self.fm_deviation, self.am_depth, self.hilbert_taps, self.silence_duty)

    def generation(self) -> GenerationConfig:
        return GenerationConfig(classes=self.classes, snrs=self.snrs,
                                signals_per_cell=self.signals_per_cell,
                                windows_per_signal=self.windows_per_signal, step=self.step,
                                seed=self.seed, channel=self.channel(), modem=self.modem(),
                                workers=self.workers)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_frac, self.val_frac, self.test_frac, self.split_seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.learning_rate, self.beta1, self.beta2, self.eps,
                           self.max_epochs, self.patience, self.train_seed, self.time_budget)

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in fields(self) for v in [getattr(self, f.name)]}

    def dumps(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.as_dict().items())

    def override(self, pairs: dict) -> "RunConfig":
        try:
            return replace(self, **{k: _coerce(k, v) for k, v in pairs.items()})
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None


def format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key, raw):
    if key not in _KEYS:
        raise ConfigError(f"unknown key {key!r}")
    if not isinstance(raw, str):
        return raw
    try:
        return _KEYS[key][0](raw.strip())
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse config text on top of ``base`` (defaults when None)."""
    vals = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in vals:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            vals[key] = _coerce(key, raw)
        except ConfigError as e:
            raise ConfigError(str(e), lineno) from None
    try:
        return replace(base or RunConfig(), **vals)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), base)


def key_help() -> str:
    d = RunConfig().as_dict()
    width = max(map(len, _KEYS))
    return "\n".join(f"  {k:<{width}}  {h} [default: {format_value(d[k])}]" for k, (_, h) in _KEYS.items())
