"""Streaming text-corpus cleaner with per-rule statistics.

Records are newline-delimited UTF-8 lines. Each record passes through four
rules in a fixed order so that every drop is attributed to exactly one
bucket: HTML stripping (drop when tags made up too much of the record),
short-record removal, high non-alphanumeric-ratio removal, and exact
deduplication (first occurrence wins). Survivors keep their input order and
carry the tag-stripped text.

Cleaning is idempotent, and the sharded parallel path produces output and
statistics byte-identical to the sequential reference for any worker count:
per-record classification is order-free, while the duplicate set is applied
during a sequential, input-ordered merge.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from multiprocessing import Pool

DEFAULT_SHORT_THRESHOLD = 5
DEFAULT_RATIO_THRESHOLD = 0.10
DEFAULT_HTML_THRESHOLD = 0.30

# An angle-bracket tag: open bracket, 1-100 non-bracket chars, close bracket.
_TAG_RE = re.compile(r"<[^<>]{1,100}>")


@dataclass
class CleanStats:
    input_records: int = 0
    kept_records: int = 0
    dropped_html: int = 0
    dropped_short: int = 0
    dropped_ratio: int = 0
    dropped_duplicate: int = 0

    @property
    def retention(self) -> float:
        if self.input_records == 0:
            return 0.0
        return self.kept_records / self.input_records

    FIELDS = (
        "input_records",
        "kept_records",
        "dropped_html",
        "dropped_short",
        "dropped_ratio",
        "dropped_duplicate",
        "retention",
    )

    def to_csv(self) -> str:
        header = ",".join(self.FIELDS)
        row = ",".join(
            [
                str(self.input_records),
                str(self.kept_records),
                str(self.dropped_html),
                str(self.dropped_short),
                str(self.dropped_ratio),
                str(self.dropped_duplicate),
                repr(self.retention),
            ]
        )
        return header + "\n" + row + "\n"


def strip_html(record: str, threshold: float = DEFAULT_HTML_THRESHOLD) -> tuple[str, bool]:
    """Remove tag spans; flag the record dropped when they exceed the
    threshold fraction of its original characters.

    Removal repeats until no tag matches remain, so the output never
    contains a tag span (removal can splice new brackets together).
    """
    text = record
    removed = 0
    while True:
        stripped, n_subs = _TAG_RE.subn("", text)
        if n_subs == 0:
            break
        removed += len(text) - len(stripped)
        text = stripped
    dropped = bool(record) and removed > threshold * len(record)
    return text, dropped


def is_short(record: str, threshold: int = DEFAULT_SHORT_THRESHOLD) -> bool:
    """True when the record has fewer whitespace-delimited tokens than the threshold."""
    return len(record.split()) < threshold


def nonalnum_ratio(record: str) -> float:
    """Fraction of non-whitespace characters that are not letters or decimal digits."""
    non_ws = 0
    non_alnum = 0
    for ch in record:
        if ch.isspace():
            continue
        non_ws += 1
        if not (ch.isalpha() or ch.isdecimal()):
            non_alnum += 1
    if non_ws == 0:
        return 0.0
    return non_alnum / non_ws


def dedup_key(record: str) -> bytes:
    """128-bit hash of the whitespace-normalized record (case-sensitive)."""
    normalized = " ".join(record.split())
    return hashlib.blake2b(normalized.encode("utf-8"), digest_size=16).digest()


def _classify(record: str, short_threshold: int, ratio_threshold: float, html_threshold: float):
    """First failing rule for one record, or its cleaned text and dup key."""
    text, html_dropped = strip_html(record, html_threshold)
    if html_dropped:
        return ("html", None, None)
    if is_short(text, short_threshold):
        return ("short", None, None)
    if nonalnum_ratio(text) > ratio_threshold:
        return ("ratio", None, None)
    return ("ok", text, dedup_key(text))


def _classify_chunk(args):
    records, short_threshold, ratio_threshold, html_threshold = args
    return [_classify(r, short_threshold, ratio_threshold, html_threshold) for r in records]


def clean_stream(
    records,
    short_threshold: int = DEFAULT_SHORT_THRESHOLD,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    html_threshold: float = DEFAULT_HTML_THRESHOLD,
    jobs: int = 1,
) -> tuple[list[str], CleanStats]:
    """Clean an iterable of records; returns (survivors, stats).

    ``jobs`` > 1 shards the per-record work across processes; the output and
    stats are identical to the sequential run because duplicate resolution
    happens in a single input-ordered merge.
    """
    records = list(records)
    if jobs > 1 and len(records) > 1:
        n_chunks = min(len(records), jobs * 4)
        size = (len(records) + n_chunks - 1) // n_chunks
        chunks = [records[i : i + size] for i in range(0, len(records), size)]
        with Pool(jobs) as pool:
            results = pool.map(
                _classify_chunk,
                [(c, short_threshold, ratio_threshold, html_threshold) for c in chunks],
            )
        classified = [item for chunk in results for item in chunk]
    else:
        classified = [
            _classify(r, short_threshold, ratio_threshold, html_threshold) for r in records
        ]

    stats = CleanStats(input_records=len(records))
    seen: set[bytes] = set()
    output: list[str] = []
    for kind, text, key in classified:
        if kind == "html":
            stats.dropped_html += 1
        elif kind == "short":
            stats.dropped_short += 1
        elif kind == "ratio":
            stats.dropped_ratio += 1
        elif key in seen:
            stats.dropped_duplicate += 1
        else:
            seen.add(key)
            output.append(text)
            stats.kept_records += 1
    return output, stats


def read_records(path: str) -> list[str]:
    """Read newline-delimited UTF-8 records, reporting the position of any
    undecodable record."""
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    records = []
    for i, line in enumerate(lines):
        try:
            records.append(line.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ValueError(f"record {i} is not valid UTF-8: {exc}") from exc
    return records


def clean_file(
    input_path: str,
    output_path: str,
    stats_path: str | None = None,
    short_threshold: int = DEFAULT_SHORT_THRESHOLD,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    html_threshold: float = DEFAULT_HTML_THRESHOLD,
    jobs: int = 1,
) -> CleanStats:
    records = read_records(input_path)
    output, stats = clean_stream(
        records,
        short_threshold=short_threshold,
        ratio_threshold=ratio_threshold,
        html_threshold=html_threshold,
        jobs=jobs,
    )
    with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in output:
            fh.write(line + "\n")
    if stats_path is not None:
        with open(stats_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(stats.to_csv())
    return stats
