from datetime import date

import numpy as np
import pytest

from pipeline.errors import LogParseError
from pipeline.log_ingest import day_from_path, format_clock, parse_clock, parse_line, read_channel_day, scan_log_tree

DAY = date(2007, 6, 12)


def test_parse_message_line():
    msg = parse_line("[03:45] <kuja> Taru: Haha sucker.", DAY)
    assert msg.time == 3 * 60 + 45
    assert msg.sender == "kuja"
    assert msg.body == "Taru: Haha sucker."
    assert msg.to_line() == "[03:45] <kuja> Taru: Haha sucker."


def test_parse_keeps_bracketed_nick():
    msg = parse_line('[03:45] <bur[n]er> Old: you can use "ps ax"', DAY)
    assert msg.sender == "bur[n]er"


@pytest.mark.parametrize("line", [
    "",
    "   ",
    "=== kuja is now known as kuja_",
    "[03:45] === Taru joined #ubuntu",
    "[03:45] -!- LiveCD has quit",
    "* Taru waves",
    "[03:45] * Taru waves",
])
def test_skipped_lines(line):
    assert parse_line(line, DAY) is None


def test_action_lines_kept_on_request():
    msg = parse_line("[03:45] * Taru waves", DAY, include_actions=True)
    assert (msg.sender, msg.body) == ("Taru", "waves")


@pytest.mark.parametrize("line", ["[3:4] <a> hi", "[25:00] <a> hi", "[12:61] <a> hi", "hello there", "[12:00] nobody"])
def test_malformed_lines_raise(line):
    with pytest.raises(LogParseError):
        parse_line(line, DAY)


def test_empty_body():
    msg = parse_line("[12:00] <dell>", DAY)
    assert msg.body == ""


def test_read_channel_day_lenient(tmp_path):
    folder = tmp_path / "2007" / "06" / "12"
    folder.mkdir(parents=True)
    path = folder / "#ubuntu.txt"
    path.write_bytes(
        b"[12:21] <dell> well, can I move the drives?\n"
        b"[99:99] <dell> broken\n"
        b"=== RC joined\n"
        b"[12:22] <cucho> dell: caf\xe9\n"
    )

    result = read_channel_day(path)

    assert result.channel == "#ubuntu"
    assert result.day == DAY
    assert [m.sender for m in result.messages] == ["dell", "cucho"]
    assert result.skipped == 2
    assert "�" in result.messages[1].body


def test_read_channel_day_strict(tmp_path):
    path = tmp_path / "2007" / "06" / "12" / "#ubuntu.txt"
    path.parent.mkdir(parents=True)
    path.write_text("[99:00] <dell> broken\n", encoding="utf-8")
    with pytest.raises(LogParseError):
        read_channel_day(path, strict=True)


def test_day_from_path(tmp_path):
    assert day_from_path(tmp_path / "2007" / "06" / "12" / "#ubuntu.txt") == DAY
    assert day_from_path(tmp_path / "misc" / "#ubuntu.txt") is None


def test_scan_log_tree_orders_and_skips(tmp_path):
    for parts in [("2007", "06", "13"), ("2007", "06", "12"), ("2007", "13", "40"), ("notes", "x", "y")]:
        folder = tmp_path.joinpath(*parts)
        folder.mkdir(parents=True)
        (folder / "#ubuntu.txt").write_text("", encoding="utf-8")
    (tmp_path / "2007" / "06" / "12" / "#kubuntu.txt").write_text("", encoding="utf-8")

    entries = scan_log_tree(tmp_path)

    assert [(e.channel, e.day) for e in entries] == [
        ("#kubuntu", DAY),
        ("#ubuntu", DAY),
        ("#ubuntu", date(2007, 6, 13)),
    ]


def test_scan_log_tree_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        scan_log_tree(tmp_path / "nope")


def test_control_characters_stay_in_the_body(tmp_path):
    path = tmp_path / "2007" / "06" / "12" / "#ubuntu.txt"
    path.parent.mkdir(parents=True)
    path.write_text(
        "[12:21] <dell> see \x1dthis\x1d part\r\n"
        "[12:22] <cucho> page\x0cbreak\n"
        "[12:23] <RC> odd\x85sep here\x1cend\n",
        encoding="utf-8",
        newline="",
    )

    result = read_channel_day(path)

    assert result.skipped == 0
    assert [m.body for m in result.messages] == [
        "see \x1dthis\x1d part",
        "page\x0cbreak",
        "odd\x85sep here\x1cend",
    ]


def _physical_lines(data: bytes) -> int:
    return data.count(b"\n") + (1 if data and not data.endswith(b"\n") else 0)


def test_every_line_is_parsed_or_skipped(tmp_path):
    rng = np.random.default_rng(5)
    pieces = [
        "[10:0{m}] <dell> hello {m}", "=== RC joined", "garbage here", "", "[99:00] <x> bad",
        "[10:1{m}] * taru waves", "[10:2{m}] <taru> a\x1db\x0cc", "[10:3{m}] <kuja>",
    ]
    folder = tmp_path / "2007" / "06" / "12"
    folder.mkdir(parents=True)
    for trial in range(50):
        lines = [pieces[i].format(m=int(rng.integers(10))) for i in rng.integers(len(pieces), size=int(rng.integers(0, 30)))]
        ending = "\r\n" if trial % 2 else "\n"
        data = ending.join(lines).encode("utf-8") + (ending.encode() if trial % 3 else b"")
        path = folder / f"#c{trial}.txt"
        path.write_bytes(data)

        result = read_channel_day(path)

        assert len(result.messages) + result.skipped == _physical_lines(data)


def test_arbitrary_bytes_never_raise(tmp_path):
    rng = np.random.default_rng(17)
    folder = tmp_path / "2007" / "06" / "12"
    folder.mkdir(parents=True)
    for trial in range(200):
        data = rng.integers(0, 256, size=int(rng.integers(0, 200)), dtype=np.uint8).tobytes()
        if trial % 2:
            data = b"[12:00] <dell> " + data
        path = folder / f"#r{trial}.txt"
        path.write_bytes(data)

        result = read_channel_day(path)

        assert len(result.messages) + result.skipped == _physical_lines(data)


def test_clock_and_line_round_trip():
    for minute in range(24 * 60):
        assert parse_clock(format_clock(minute), "") == minute

    rng = np.random.default_rng(3)
    for _ in range(200):
        body = "".join(rng.choice(list("abc :,.?<>[]*=\x1d"), size=int(rng.integers(0, 20))))
        msg = parse_line(f"[{format_clock(int(rng.integers(1440)))}] <nick{int(rng.integers(9))}> {body}", DAY)
        assert parse_line(msg.to_line(), DAY) == msg
