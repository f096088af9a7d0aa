"""Pipeline configuration as a flat ``key=value`` text file."""

from dataclasses import dataclass, field, fields, replace

from .descriptors import DescriptorConfig, MultifractalConfig
from .errors import ParameterError


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class PipelineConfig:
    # detection
    median_radius: int = 1
    growcut_border: int = 2
    growcut_core: float = 0.25
    growcut_max_iters: int = 0  # 0 = width + height
    thresholds: tuple = (30, 50, 65)
    min_layers: int = 2
    grad_threshold: int = 40
    min_area: int = 20
    # descriptors
    mf_q_values: tuple = field(default_factory=lambda: MultifractalConfig().q_values)
    mf_box_sizes: tuple = (2, 4, 8, 16, 32)
    mf_floor: float = 1e-12
    mf_single_box_size: int = 0  # 0 = slope over all box sizes
    mf_intensity_mass: bool = False
    fourier_samples: int = 256
    fourier_k: int = 64
    radon_step: float = 30.0
    radon_bins: int = 16
    # classification
    classifier: str = "svm"
    knn_k: int = 4
    svm_c: float = 1.0
    svm_degree: int = 3
    svm_gamma: float = 0.0  # 0 = 1 / feature count
    svm_tol: float = 1e-3
    svm_max_passes: int = 10
    ldc_ridge: float = 1e-6
    train_fraction: float = 0.75
    rng_seed: int = 42

    def __post_init__(self):
        if self.classifier not in ("svm", "knn", "ldc"):
            raise ParameterError(f"classifier must be svm, knn or ldc, got {self.classifier!r}")
        if not 0 < self.train_fraction < 1:
            raise ParameterError("train_fraction must be in (0, 1)")

    def descriptor_config(self):
        mf = MultifractalConfig(
            q_values=tuple(self.mf_q_values), box_sizes=tuple(self.mf_box_sizes),
            min_probability_floor=self.mf_floor,
            single_box_size=self.mf_single_box_size or None,
            intensity_mass=self.mf_intensity_mass)
        return DescriptorConfig(multifractal=mf, fourier_k=self.fourier_k,
                                fourier_samples=self.fourier_samples,
                                radon_step=self.radon_step, radon_bins=self.radon_bins)

    def to_text(self):
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def with_overrides(self, overrides):
        """Apply ``{key: text}`` overrides; unknown keys are rejected."""
        return replace(self, **_parse_pairs(overrides))

    @classmethod
    def from_text(cls, text):
        pairs = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
        return cls(**_parse_pairs(pairs))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


_PARSERS = {
    int: int, float: float, str: str, bool: _bool,
}
_TUPLE_PARSERS = {"thresholds": _ints, "mf_box_sizes": _ints, "mf_q_values": _floats}


def _parse_pairs(pairs):
    types = {f.name: f.type for f in fields(PipelineConfig)}
    out = {}
    for key, value in pairs.items():
        if key not in types:
            raise ParameterError(f"unknown config key {key!r}")
        try:
            if key in _TUPLE_PARSERS:
                out[key] = _TUPLE_PARSERS[key](value)
            else:
                out[key] = _PARSERS[_resolve(types[key])](value)
        except ValueError as exc:
            raise ParameterError(f"bad value for {key}: {exc}") from None
    return out


def _resolve(tp):
    if isinstance(tp, str):
        return {"int": int, "float": float, "str": str, "bool": bool}[tp]
    return tp
