"""Plain ``key=value`` run configuration.

Files hold one ``key=value`` pair per line; blank lines and ``#`` comments
are ignored. Unknown keys are hard errors (anti-typo contract), and every
command writes the fully resolved configuration, defaults included, next
to its outputs so a run is reconstructible from its output directory.
"""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_float_list(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_int_or_auto(text: str):
    stripped = text.strip().lower()
    if stripped == "auto":
        return None
    return int(text)


PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "bool": _parse_bool,
    "str": _parse_str,
    "float_list": _parse_float_list,
    "int_or_auto": _parse_int_or_auto,
}

# Schemas: key -> (parser name, default value as it appears in a file).
SYNTH_SCHEMA = {
    "n_train": ("int", "512"),
    "n_test": ("int", "64"),
    "n_low_voxels": ("int", "80"),
    "n_high_voxels": ("int", "60"),
    "k_semantic": ("int", "12"),
    "k_detail": ("int", "16"),
    "n_layers": ("int", "6"),
    "alpha_schedule": ("float_list", "0.9,0.72,0.54,0.36,0.18,0.0"),
    "noise_voxel_low": ("float", "0.1"),
    "noise_voxel_high": ("float", "0.1"),
    "noise_layer": ("float", "0.1"),
    "noise_caption": ("float", "0.25"),
    "text_tokens": ("int", "8"),
    "text_dim": ("int", "16"),
    "image_tokens": ("int", "12"),
    "image_dim": ("int", "16"),
}

MODEL_SCHEMA = {
    "latent_dim": ("int", "128"),
    "dropout_codec": ("float", "0.15"),
    "dropout_backbone": ("float", "0.5"),
}

TRAIN_SCHEMA = {
    "epochs": ("int", "200"),
    "batch_size": ("int", "32"),
    "learning_rate": ("float", "3e-4"),
    "beta1": ("float", "0.9"),
    "beta2": ("float", "0.999"),
    "epsilon": ("float", "1e-8"),
    "weight_cka": ("float", "1.0"),
    "weight_sims": ("float", "1.0"),
    "weight_crec": ("float", "1.0"),
    "anchor_mode": ("str", "own_first_token"),
    "detail_layer_lo": ("int_or_auto", "auto"),
    "detail_layer_hi": ("int_or_auto", "auto"),
    "semantic_target_from_final": ("bool", "true"),
    "separate_branches": ("bool", "false"),
    "text_batch_size": ("int_or_auto", "auto"),
    "image_batch_size": ("int_or_auto", "auto"),
    "eval_similarity": ("str", "pearson"),
}

ANALYZE_SCHEMA = {
    "rsa_mode": ("str", "raw"),
    "ridge_lambda": ("float", "1.0"),
    "scan_ranges": ("str", "2-5,2-5+final,1-4,1-4+final"),
    "scan_epochs": ("int", "60"),
    **MODEL_SCHEMA,
    **TRAIN_SCHEMA,
}


def read_config_file(path) -> dict:
    """Parse raw key=value lines; duplicates are usage errors."""
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {p} does not exist")
    raw = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise UsageError(f"{p}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        if key in raw:
            raise UsageError(f"{p}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def resolve(raw: dict, schema: dict) -> dict:
    """Apply defaults and type the values; unknown keys are errors."""
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    resolved = {}
    for key, (parser_name, default) in schema.items():
        text = raw.get(key, default)
        try:
            resolved[key] = PARSERS[parser_name](text)
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
    return resolved


def format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_resolved(resolved: dict, path) -> None:
    """Write the fully resolved configuration, sorted by key."""
    lines = [f"{key}={format_value(resolved[key])}" for key in sorted(resolved)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
