"""
Shared fixtures: two transcribed #ubuntu excerpts, a log-tree builder and
the keyword-copy task
"""

from datetime import date
from pathlib import Path

import pytest

from pipeline.log_ingest import ChannelDay, parse_line

EXCERPT_DAY = date(2007, 6, 12)

# kuja and Taru talk; bur[n]er answers Old; LiveCD and _pm talk to nobody
TARU_KUJA_LINES = [
    "[03:44] <Old> I dont run graphical ubuntu, I run ubuntu server.",
    "[03:45] <kuja> Taru: Haha sucker.",
    "[03:45] <Taru> Kuja: ?",
    '[03:45] <bur[n]er> Old: you can use "ps ax" and "kill (PID#)"',
    "[03:45] <kuja> Taru: Anyways, you made the changes right?",
    "[03:45] <Taru> Kuja: Yes.",
    "[03:45] <LiveCD> or killall speedlink",
    "[03:45] <kuja> Taru: Then from the terminal type: sudo apt-get update",
    "[03:46] <_pm> if i install the beta version, how can i update it when the final version comes out?",
    "[03:46] <Taru> Kuja: I did.",
]

# dell talks to both cucho and RC; RC talks only to dell
DELL_RAID_LINES = [
    "[12:21] <dell> well, can I move the drives?",
    "[12:21] <cucho> dell: ah not like that",
    "[12:21] <RC> dell: you can't move the drives",
    "[12:21] <RC> dell: definitely not",
    "[12:21] <dell> ok",
    "[12:21] <dell> lol",
    "[12:21] <RC> this is the problem with RAID:)",
    "[12:21] <dell> RC haha yeah",
    "[12:22] <dell> cucho, I guess I could just get an enclosure and copy via USB...",
    "[12:22] <cucho> dell: i would advise you to get the disk",
]


def channel_day(lines, day=EXCERPT_DAY, channel="#ubuntu") -> ChannelDay:
    messages = [m for m in (parse_line(ln, day) for ln in lines) if m is not None]
    return ChannelDay(channel=channel, day=day, messages=messages)


def write_log_tree(root: Path, days) -> Path:
    """days: {(channel, date): [lines]} -> root/YYYY/MM/DD/<channel>.txt"""
    for (channel, day), lines in days.items():
        folder = root / f"{day.year:04d}" / f"{day.month:02d}" / f"{day.day:02d}"
        folder.mkdir(parents=True, exist_ok=True)
        (folder / f"{channel}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root


@pytest.fixture
def taru_kuja_day() -> ChannelDay:
    return channel_day(TARU_KUJA_LINES)


@pytest.fixture
def dell_raid_day() -> ChannelDay:
    return channel_day(DELL_RAID_LINES)


@pytest.fixture
def excerpt_log_tree(tmp_path) -> Path:
    return write_log_tree(tmp_path / "logs", {
        ("#ubuntu", EXCERPT_DAY): TARU_KUJA_LINES,
        ("#ubuntu", date(2007, 6, 13)): DELL_RAID_LINES,
    })


@pytest.fixture(scope="session")
def keyword_task():
    from ranking.synthetic_task import make_synthetic_task
    return make_synthetic_task(n_train=2000, n_test=200, negatives=9, seed=7)
