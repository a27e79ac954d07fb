"""Tiny key=value text format used by the dataset and model manifests.

One `key=value` pair per line; blank lines and lines starting with # are
ignored; keys keep file order; duplicate keys are an error. Values are
stored verbatim (no quoting), so they must not contain newlines.
"""


class ManifestError(ValueError):
    pass


def parse_kv(text, where="manifest"):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ManifestError(f"{where}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in pairs:
            raise ManifestError(f"{where}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def read_kv(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv(fh.read(), where=str(path))


def write_kv(path, pairs):
    """``pairs`` is a dict or a sequence of (key, value); order is kept."""
    if hasattr(pairs, "items"):
        pairs = pairs.items()
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in pairs:
            value = str(value)
            if "\n" in value or "\n" in key:
                raise ManifestError(f"newline in manifest entry {key!r}")
            fh.write(f"{key}={value}\n")
