import json
import os
import logging

logger = logging.getLogger("painreg.utils")


def ensure_dir(path):
    """Create directory `path` (and parents) if missing; return it."""
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def save_json(data, path):
    """
    Write JSON to `path`, creating the parent directory.
    Floats keep their round-trip repr; NaN is refused so outputs stay strict JSON.
    Return the path written.
    """
    ensure_dir(os.path.dirname(path))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, allow_nan=False)
            f.write("\n")
    except OSError:
        logger.exception("Failed to write JSON to %s", path)
        raise
    logger.info("Wrote JSON to %s", path)
    return path


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_frame(frame, path):
    """Write a pandas DataFrame as UTF-8 CSV with LF line endings."""
    ensure_dir(os.path.dirname(path))
    try:
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError:
        logger.exception("Failed to write CSV to %s", path)
        raise
    logger.info("Wrote CSV to %s (%d rows)", path, len(frame))
    return path


def none_if_nan(value):
    """Map NaN/None to None and everything else to float, for JSON output."""
    if value is None:
        return None
    value = float(value)
    if value != value:
        return None
    return value
