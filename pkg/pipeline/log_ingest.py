"""
Chat-log ingestion
Parses IRC channel logs laid out as root/YYYY/MM/DD/#channel.txt, one
`[HH:MM] <nick> body` line per message, into ordered RawMessage sequences.
"""

import re
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import List, NamedTuple, Optional

from .errors import LogParseError

logger = logging.getLogger(__name__)


# ---------- Types ----------
@dataclass(frozen=True)
class RawMessage:
    """One chat line before recipient resolution"""
    day: date
    time: int  # minute of day, 0..1439
    sender: str
    body: str

    @property
    def clock(self) -> str:
        return format_clock(self.time)

    def to_line(self) -> str:
        return f"[{self.clock}] <{self.sender}> {self.body}"


@dataclass
class ChannelDay:
    channel: str
    day: date
    messages: List[RawMessage] = field(default_factory=list)
    skipped: int = 0


class LogEntry(NamedTuple):
    channel: str
    day: date
    path: Path


def format_clock(minute_of_day: int) -> str:
    return f"{minute_of_day // 60:02d}:{minute_of_day % 60:02d}"


# ---------- Line parsing ----------
TIMESTAMP_PATTERN = re.compile(r"^\[(?P<stamp>[^\]]*)\]\s?(?P<rest>.*)$")
CLOCK_PATTERN = re.compile(r"^(?P<hh>\d{1,2}):(?P<mm>\d{2})$")
MESSAGE_PATTERN = re.compile(r"^<(?P<nick>[^<>\s]+)>(?: (?P<body>.*))?$")
ACTION_PATTERN = re.compile(r"^\* (?P<nick>\S+)(?: (?P<body>.*))?$")
SYSTEM_PREFIXES = ("===", "-!-")


def parse_clock(stamp: str, line: str) -> int:
    match = CLOCK_PATTERN.match(stamp)
    if not match:
        raise LogParseError(line, "malformed timestamp")
    hours, minutes = int(match.group("hh")), int(match.group("mm"))
    if hours > 23 or minutes > 59:
        raise LogParseError(line, "timestamp out of range")
    return hours * 60 + minutes


def parse_line(line: str, day: date, include_actions: bool = False) -> Optional[RawMessage]:
    """
    Parse one log line.

    Returns a RawMessage for `[HH:MM] <nick> body` lines and None (skip) for
    blank lines, system lines and, unless include_actions is set, action lines.
    Raises LogParseError for lines that cannot be read as either.
    """
    line = line.rstrip("\r\n")
    if not line.strip():
        return None
    if line.startswith(SYSTEM_PREFIXES):
        return None
    if line.startswith("* "):
        # untimestamped action line; there is no time to attach
        return None

    stamped = TIMESTAMP_PATTERN.match(line)
    if not stamped:
        raise LogParseError(line, "unrecognised line")
    time = parse_clock(stamped.group("stamp"), line)
    rest = stamped.group("rest")

    message = MESSAGE_PATTERN.match(rest)
    if message:
        return RawMessage(day, time, message.group("nick"), message.group("body") or "")

    if rest.startswith(SYSTEM_PREFIXES):
        return None

    action = ACTION_PATTERN.match(rest)
    if action:
        if not include_actions:
            return None
        return RawMessage(day, time, action.group("nick"), action.group("body") or "")

    raise LogParseError(line, "unrecognised line")


# ---------- Files ----------
def day_from_path(path: Path) -> Optional[date]:
    """Recover the calendar date from a .../YYYY/MM/DD/#channel.txt path"""
    try:
        dd, mm, yyyy = path.parent.name, path.parent.parent.name, path.parent.parent.parent.name
        return date(int(yyyy), int(mm), int(dd))
    except (ValueError, TypeError):
        return None


def read_channel_day(path,
                     day: Optional[date] = None,
                     channel: Optional[str] = None,
                     strict: bool = False,
                     include_actions: bool = False) -> ChannelDay:
    """Read one channel-day file; invalid UTF-8 bytes are replaced, not fatal"""
    path = Path(path)
    day = day or day_from_path(path)
    if day is None:
        raise ValueError(f"Cannot infer the log date from {path}; pass day explicitly")
    channel = channel or path.stem

    result = ChannelDay(channel=channel, day=day)
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as f:
        text = f.read()

    # only "\n" ends a line; IRC control codes (\x1d, \x0c, ...) stay in the body
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in text.split("\n")]
    if lines and lines[-1] == "":
        lines.pop()

    last_time = -1
    for line in lines:
        try:
            msg = parse_line(line, day, include_actions=include_actions)
        except LogParseError as e:
            if strict:
                raise
            logger.warning(f"{path}: skipping line ({e.reason}): {e.line[:80]!r}")
            msg = None

        if msg is None:
            result.skipped += 1
            continue
        if msg.time < last_time:
            logger.debug(f"{path}: time goes backwards at {msg.clock}")
        last_time = msg.time
        result.messages.append(msg)

    logger.debug(f"Read {len(result.messages)} messages ({result.skipped} skipped) from {path}")
    return result


def _parse_component(name: str, width: int) -> Optional[int]:
    if len(name) != width or not name.isdigit():
        return None
    return int(name)


def scan_log_tree(root) -> List[LogEntry]:
    """List every channel-day file under root/YYYY/MM/DD/, sorted by (channel, date)"""
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"Log root not found: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"Log root is not a directory: {root}")

    entries: List[LogEntry] = []
    for year_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for month_dir in sorted(p for p in year_dir.iterdir() if p.is_dir()):
            for day_dir in sorted(p for p in month_dir.iterdir() if p.is_dir()):
                parts = (
                    _parse_component(year_dir.name, 4),
                    _parse_component(month_dir.name, 2),
                    _parse_component(day_dir.name, 2),
                )
                try:
                    if None in parts:
                        raise ValueError("non-numeric component")
                    day = date(*parts)
                except ValueError:
                    logger.warning(f"Skipping malformed log directory: {day_dir}")
                    continue
                for log_file in sorted(day_dir.glob("*.txt")):
                    entries.append(LogEntry(log_file.stem, day, log_file))

    entries.sort(key=lambda e: (e.channel, e.day))
    return entries
