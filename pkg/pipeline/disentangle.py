"""
Dyadic dialogue extraction from multi-party channel logs

Pipeline per channel-day (order is fixed):
  identify_recipient -> extract_dialogues -> fill_holes -> merge_consecutive -> filter_dialogue
"""

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .log_ingest import ChannelDay, RawMessage, format_clock

logger = logging.getLogger(__name__)

DEFAULT_COMMON_WORDS = Path(__file__).resolve().parent / "common_words.txt"
MENTION_STRIP = ":,."
LAST_MENTION_STRIP = ":,.?!"


# ---------- Types ----------
@dataclass
class UsernameRoster:
    """Nicknames seen as senders, keyed case-insensitively"""
    names: Dict[str, str] = field(default_factory=dict)  # lower -> first spelling seen
    window: int = 0

    def __contains__(self, nick: str) -> bool:
        return nick.lower() in self.names

    def __len__(self) -> int:
        return len(self.names)

    def canonical(self, nick: str) -> Optional[str]:
        return self.names.get(nick.lower())


@dataclass(frozen=True)
class AddressedMessage:
    day: date
    time: int
    sender: str
    recipient: Optional[str]
    utterance: str
    position: int = 0  # index in the day stream

    @property
    def addressed(self) -> bool:
        return self.recipient is not None


@dataclass(frozen=True)
class Turn:
    day: date
    time: int
    sender: str
    recipient: Optional[str]
    text: str


@dataclass
class DialogueCandidate:
    participants: Tuple[str, str]  # (asker, answerer)
    source: Tuple[str, date]
    messages: List[AddressedMessage] = field(default_factory=list)
    turns: List[Turn] = field(default_factory=list)

    @property
    def keys(self) -> Tuple[str, str]:
        return self.participants[0].lower(), self.participants[1].lower()

    @property
    def span(self) -> Tuple[int, int]:
        positions = [m.position for m in self.messages]
        return min(positions), max(positions)


@dataclass
class Dialogue:
    id: str
    participants: Tuple[str, str]
    turns: List[Turn]
    source: Tuple[str, date]
    utterance_count: int  # before concatenation


class Rejection(NamedTuple):
    reason: str  # "min_turns" | "dominance"
    candidate: DialogueCandidate


@dataclass
class ExtractionConfig:
    window_mins: int = 3
    min_turns: int = 3
    dominance_len: int = 5
    dominance_frac: float = 0.8
    prev_days: int = 1
    match_last_token: bool = False


# ---------- Common words ----------
def load_common_words(path=None) -> FrozenSet[str]:
    """One lowercase word per line; blank lines and # comments ignored"""
    path = Path(path) if path else DEFAULT_COMMON_WORDS
    with open(path, "r", encoding="utf-8") as f:
        words = {ln.strip().lower() for ln in f if ln.strip() and not ln.startswith("#")}
    logger.debug(f"Loaded {len(words)} common words from {path}")
    return frozenset(words)


# ---------- Recipient identification ----------
def build_roster(history: Sequence[ChannelDay], window_days: int) -> UsernameRoster:
    """Senders of the most recent day in history and of the window_days before it"""
    roster = UsernameRoster(window=window_days)
    if not history:
        return roster
    current = max(d.day for d in history)
    for channel_day in sorted(history, key=lambda d: d.day):
        if (current - channel_day.day).days > window_days:
            continue
        for msg in channel_day.messages:
            roster.names.setdefault(msg.sender.lower(), msg.sender)
    return roster


def _resolve_mention(token: str, strip: str, sender: str,
                     roster: UsernameRoster, common_words: FrozenSet[str]) -> Optional[str]:
    name = token.rstrip(strip)
    if not name or name.lower() in common_words:
        return None
    canonical = roster.canonical(name)
    if canonical is None or canonical.lower() == sender.lower():
        return None
    return canonical


def identify_recipient(msg: RawMessage,
                       roster: UsernameRoster,
                       common_words: FrozenSet[str],
                       position: int = 0,
                       match_last_token: bool = False) -> AddressedMessage:
    tokens = msg.body.split(maxsplit=1)
    recipient = None
    utterance = msg.body

    if tokens:
        recipient = _resolve_mention(tokens[0], MENTION_STRIP, msg.sender, roster, common_words)
        if recipient is not None:
            utterance = tokens[1].strip() if len(tokens) > 1 else ""
        elif match_last_token:
            head, _, last = msg.body.rstrip().rpartition(" ")
            if head:
                recipient = _resolve_mention(last, LAST_MENTION_STRIP, msg.sender, roster, common_words)
                if recipient is not None:
                    utterance = head.strip()

    return AddressedMessage(
        day=msg.day,
        time=msg.time,
        sender=msg.sender,
        recipient=recipient,
        utterance=utterance,
        position=position,
    )


def address_day(channel_day: ChannelDay,
                roster: UsernameRoster,
                common_words: FrozenSet[str],
                match_last_token: bool = False) -> List[AddressedMessage]:
    return [
        identify_recipient(msg, roster, common_words, position=pos, match_last_token=match_last_token)
        for pos, msg in enumerate(channel_day.messages)
    ]


# ---------- Dialogue extraction ----------
def _pair_key(a: str, b: str) -> FrozenSet[str]:
    return frozenset((a.lower(), b.lower()))


def find_initial_question(day: Sequence[AddressedMessage], response_index: int,
                          asker: str, window_mins: int) -> Optional[AddressedMessage]:
    """The asker's most recent unaddressed utterance within window_mins before the response"""
    response = day[response_index]
    asker = asker.lower()
    for msg in reversed(day[:response_index]):
        if response.time - msg.time > window_mins:
            break
        if msg.sender.lower() == asker and not msg.addressed:
            return msg
    return None


def extract_dialogues(day: Sequence[AddressedMessage],
                      window_mins: int = 3,
                      source: Tuple[str, date] = ("", date.min)) -> List[DialogueCandidate]:
    """
    Group a day's addressed messages into per-pair candidates.

    The first message addressing someone opens the pair; the addressee's
    recent unaddressed utterance (if any, within window_mins) is prepended as
    the initial question. Later messages between the same two users join the
    same candidate regardless of time.
    """
    open_pairs: Dict[FrozenSet[str], DialogueCandidate] = {}
    candidates: List[DialogueCandidate] = []

    for idx, msg in enumerate(day):
        if not msg.addressed:
            continue
        key = _pair_key(msg.sender, msg.recipient)
        candidate = open_pairs.get(key)
        if candidate is None:
            candidate = DialogueCandidate(participants=(msg.recipient, msg.sender), source=source)
            question = find_initial_question(day, idx, msg.recipient, window_mins)
            if question is not None:
                candidate.messages.append(question)
            else:
                logger.debug(f"No initial question for {msg.sender} -> {msg.recipient} at {format_clock(msg.time)}")
            open_pairs[key] = candidate
            candidates.append(candidate)
        candidate.messages.append(msg)

    return candidates


def fill_holes(candidate: DialogueCandidate, day: Sequence[AddressedMessage]) -> DialogueCandidate:
    """
    Insert a participant's unaddressed utterances inside the candidate's span,
    unless that participant exchanges addressed messages with a third party
    during the span.
    """
    lo, hi = candidate.span
    window = [m for m in day if lo <= m.position <= hi]
    a, b = candidate.keys
    partner = {a: b, b: a}

    present = {m.position for m in candidate.messages}
    added: List[AddressedMessage] = []
    for participant in (a, b):
        busy = False
        for m in window:
            if not m.addressed:
                continue
            sender, recipient = m.sender.lower(), m.recipient.lower()
            if (sender == participant and recipient != partner[participant]) or \
               (recipient == participant and sender != partner[participant]):
                busy = True
                break
        if busy:
            continue
        for m in window:
            if m.sender.lower() == participant and not m.addressed and m.position not in present:
                added.append(m)
                present.add(m.position)

    if not added:
        return candidate
    messages = sorted(candidate.messages + added, key=lambda m: m.position)
    return replace(candidate, messages=messages)


def merge_consecutive(candidate: DialogueCandidate) -> DialogueCandidate:
    """Collapse runs of same-sender utterances into one turn"""
    spelling = {p.lower(): p for p in candidate.participants}
    turns: List[Turn] = []
    run: List[AddressedMessage] = []

    def close_run():
        if not run:
            return
        first = run[0]
        text = " ".join(m.utterance for m in run if m.utterance)
        turns.append(Turn(
            day=first.day,
            time=first.time,
            sender=spelling.get(first.sender.lower(), first.sender),
            recipient=first.recipient,
            text=text,
        ))

    for msg in candidate.messages:
        if run and run[-1].sender.lower() != msg.sender.lower():
            close_run()
            run = []
        run.append(msg)
    close_run()

    return replace(candidate, turns=turns)


def dialogue_id(candidate: DialogueCandidate) -> str:
    channel, day = candidate.source
    first = min(m.position for m in candidate.messages)
    a, b = candidate.participants
    key = f"{channel}|{day.isoformat()}|{first}|{a}|{b}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def filter_dialogue(candidate: DialogueCandidate,
                    min_turns: int = 3,
                    dominance_len: int = 5,
                    dominance_frac: float = 0.8) -> Union[Dialogue, Rejection]:
    """Turn minimum counts merged turns; the dominance rule counts raw utterances"""
    if len(candidate.turns) < min_turns:
        return Rejection("min_turns", candidate)

    n_utterances = len(candidate.messages)
    if n_utterances > dominance_len:
        counts = Counter(m.sender.lower() for m in candidate.messages)
        if max(counts.values()) / n_utterances > dominance_frac:
            return Rejection("dominance", candidate)

    return Dialogue(
        id=dialogue_id(candidate),
        participants=candidate.participants,
        turns=list(candidate.turns),
        source=candidate.source,
        utterance_count=n_utterances,
    )


# ---------- Day / channel drivers ----------
def disentangle_day(channel_day: ChannelDay,
                    roster: UsernameRoster,
                    common_words: FrozenSet[str],
                    config: ExtractionConfig) -> Tuple[List[Dialogue], Counter]:
    stream = address_day(channel_day, roster, common_words, config.match_last_token)
    source = (channel_day.channel, channel_day.day)

    accepted: List[Tuple[int, Dialogue]] = []
    rejections: Counter = Counter()
    for candidate in extract_dialogues(stream, config.window_mins, source):
        candidate = merge_consecutive(fill_holes(candidate, stream))
        result = filter_dialogue(candidate, config.min_turns, config.dominance_len, config.dominance_frac)
        if isinstance(result, Rejection):
            rejections[result.reason] += 1
            logger.debug(f"Rejected {'/'.join(candidate.participants)} ({result.reason})")
        else:
            accepted.append((candidate.span[0], result))
    accepted.sort(key=lambda a: a[0])
    return [d for _, d in accepted], rejections


def disentangle_channel(days: Iterable[ChannelDay],
                        common_words: FrozenSet[str],
                        config: ExtractionConfig) -> Tuple[List[Dialogue], Counter]:
    """Process one channel's days in date order; the roster spans prev_days earlier days"""
    ordered = sorted(days, key=lambda d: d.day)
    dialogues: List[Dialogue] = []
    rejections: Counter = Counter()
    for idx, channel_day in enumerate(ordered):
        history = [d for d in ordered[: idx + 1] if (channel_day.day - d.day).days <= config.prev_days]
        roster = build_roster(history, config.prev_days)
        day_dialogues, day_rejections = disentangle_day(channel_day, roster, common_words, config)
        dialogues.extend(day_dialogues)
        rejections.update(day_rejections)
        logger.info(
            f"{channel_day.channel} {channel_day.day}: {len(day_dialogues)} dialogues, "
            f"{sum(day_rejections.values())} rejected"
        )
    return dialogues, rejections
