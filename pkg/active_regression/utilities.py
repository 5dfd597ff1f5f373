"""
utilities.py

General helpers used by several modules: JSON artifact IO, output paths,
comma-separated flag parsing, seed derivation and artifact metadata.

This module is intended for functions that are used in multiple places or are
general-purpose helpers.
"""

import hashlib
import json
import os
import re

import numpy as np

from active_regression.config import TOOL_NAME, TOOL_VERSION
from active_regression.errors import IoError, SchemaError, UsageError


def canonical_json(obj) -> str:
    """
    Serializes an object to a canonical JSON string (sorted keys, no spaces).

    Args:
        obj: JSON-compatible object.

    Returns:
        The canonical string, stable across runs for equal inputs.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def short_digest(text: str, length: int = 16) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def write_json(obj, path: str) -> None:
    """
    Writes a JSON artifact, creating parent directories when needed.

    Args:
        obj: JSON-compatible object.
        path: Output file path.
    """
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f, indent=2, sort_keys=False, allow_nan=False)
            f.write("\n")
    except OSError as e:
        raise IoError(f"Could not write {path}: {e}") from e


def read_json(path: str):
    if not os.path.isfile(path):
        raise IoError(f"File {path} not found.")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path} is not valid JSON: {e}") from e


def artifact_meta(command: str, flags: dict) -> dict:
    """
    Returns the metadata block every output artifact embeds.

    Args:
        command: Subcommand or operation that produced the artifact.
        flags: Resolved flag set, defaults included.

    Returns:
        Dictionary with tool name, version, command and flags.
    """
    return {"tool": TOOL_NAME, "version": TOOL_VERSION, "command": command, "flags": flags}


def parse_float_list(value: str) -> list[float]:
    """
    Parses a comma-separated list of floats, e.g. '1,0.1,0.01'.
    """
    try:
        items = [float(x.strip()) for x in value.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"Expected comma-separated numbers, got {value!r}") from e
    if not items:
        raise UsageError("Expected at least one value.")
    return items


def parse_seed_list(value: str) -> list[int]:
    """
    Parses seeds given as a comma-separated list ('0,1,2') or an inclusive
    range ('0-9'), or a mix of both ('0-4,10').

    Args:
        value: Flag value.

    Returns:
        List of seeds in the order given.
    """
    seeds = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        span = re.fullmatch(r"(\d+)-(\d+)", part)
        try:
            if span:
                seeds.extend(range(int(span.group(1)), int(span.group(2)) + 1))
            else:
                seeds.append(int(part))
        except ValueError as e:
            raise UsageError(f"Could not parse seed list {value!r}") from e
    if not seeds:
        raise UsageError("Expected at least one seed.")
    return seeds


def derive_seed(master_seed: int, *path: int) -> int:
    """
    Derives an independent 64-bit seed for a sub-stream, e.g. one sweep cell.

    Args:
        master_seed: Seed the user supplied.
        path: Integers identifying the sub-stream (cell index, trial index, ...).

    Returns:
        A 64-bit unsigned seed that depends only on the arguments.
    """
    sequence = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
