"""
Utterance pre-processing for the rankers

Rule tokenizer (lowercase, whitespace split, punctuation and clitics split off,
URLs / paths / emoticons kept whole), generic entity tags, vocabulary and
integer encoding.
"""

import re
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence, Union

from .disentangle import UsernameRoster

logger = logging.getLogger(__name__)

PUNCTUATION = set(".,:;!?()\"'")
CLITICS = ("n't", "'s", "'re", "'ll", "'ve", "'m", "'d")
EMOTICONS = sorted(
    {":)", ":(", ":d", ":p", ":/", ":\\", ":|", ":o", ";)", ";p", ";d", ":-)", ":-(", ":-d", ":-p",
     ";-)", ":'(", "xd", "<3", "^^", "^_^", "o_o", ":3", "=)", "=("},
    key=len,
    reverse=True,
)
URL_PATTERN = re.compile(r"^(?:[a-z][a-z0-9+.\-]*://\S+|www\.\S+)$")

URL_TAG = "__url__"
PATH_TAG = "__path__"
NAME_TAG = "__name__"
LOCATION_TAG = "__location__"
ORGANIZATION_TAG = "__organization__"
ENTITY_TAGS = frozenset({URL_TAG, PATH_TAG, NAME_TAG, LOCATION_TAG, ORGANIZATION_TAG})

EOS = "__EOS__"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


# ---------- Tokenization ----------
def is_url(token: str) -> bool:
    return bool(URL_PATTERN.match(token))


def is_path(token: str) -> bool:
    return "/" in token and token[0] in "/~" and not is_url(token)


def _split_clitic(core: str) -> List[str]:
    if core in CLITICS:
        return [core]
    for clitic in CLITICS:
        if core.endswith(clitic) and len(core) > len(clitic):
            return [core[: -len(clitic)], clitic]
    return [core]


def _tokenize_word(word: str) -> List[str]:
    if word in EMOTICONS or is_url(word) or is_path(word):
        return [word]

    trailing: List[str] = []
    end = len(word)
    while end > 0 and word[end - 1] in PUNCTUATION:
        # a trailing emoticon stays whole ("raid:)")
        emoticon = next((e for e in EMOTICONS if word[:end].endswith(e) and e[0] in PUNCTUATION), None)
        if emoticon and end > len(emoticon):
            trailing.insert(0, emoticon)
            end -= len(emoticon)
            continue
        trailing.insert(0, word[end - 1])
        end -= 1
    core = word[:end]

    if core in CLITICS:
        return [core] + trailing

    leading: List[str] = []
    start = 0
    while start < len(core) and core[start] in PUNCTUATION:
        leading.append(core[start])
        start += 1
    core = core[start:]
    if not core:
        return leading + trailing
    if core in EMOTICONS or is_url(core) or is_path(core):
        return leading + [core] + trailing
    parts = _split_clitic(core)
    if len(parts) == 2:
        # the stem may still carry punctuation ("ubuntu"'s)
        return leading + _tokenize_word(parts[0]) + [parts[1]] + trailing
    return leading + parts + trailing


def tokenize(text: str) -> List[str]:
    tokens: List[str] = []
    for word in text.lower().split():
        tokens.extend(t for t in _tokenize_word(word) if t)
    return tokens


# ---------- Entity tags ----------
def load_gazetteer(path) -> FrozenSet[str]:
    with open(path, "r", encoding="utf-8") as f:
        return frozenset(ln.strip().lower() for ln in f if ln.strip())


def tag_entities(tokens: Sequence[str],
                 roster: Union[UsernameRoster, Iterable[str], None] = None,
                 locations: FrozenSet[str] = frozenset(),
                 organizations: FrozenSet[str] = frozenset()) -> List[str]:
    """Replace URL, path, user-name and (optional gazetteer) tokens by generic tags"""
    if isinstance(roster, UsernameRoster):
        name_set = set(roster.names)
    else:
        name_set = {n.lower() for n in roster} if roster is not None else set()
    tagged: List[str] = []
    for token in tokens:
        if token in ENTITY_TAGS:
            tagged.append(token)
        elif is_url(token):
            tagged.append(URL_TAG)
        elif is_path(token):
            tagged.append(PATH_TAG)
        elif token in name_set:
            tagged.append(NAME_TAG)
        elif token in locations:
            tagged.append(LOCATION_TAG)
        elif token in organizations:
            tagged.append(ORGANIZATION_TAG)
        else:
            tagged.append(token)
    return tagged


@dataclass
class TextPreprocessor:
    """tokenize + tag_entities with a fixed roster and gazetteers"""
    names: FrozenSet[str] = frozenset()
    locations: FrozenSet[str] = frozenset()
    organizations: FrozenSet[str] = frozenset()

    @classmethod
    def from_files(cls, names_file=None, locations_file=None, organizations_file=None) -> "TextPreprocessor":
        return cls(
            names=load_gazetteer(names_file) if names_file else frozenset(),
            locations=load_gazetteer(locations_file) if locations_file else frozenset(),
            organizations=load_gazetteer(organizations_file) if organizations_file else frozenset(),
        )

    def tokens(self, text: str) -> List[str]:
        return tag_entities(tokenize(text), self.names, self.locations, self.organizations)

    def utterance(self, text: str) -> str:
        return " ".join(self.tokens(text))

    def context(self, context: str) -> str:
        """Pre-process each utterance of an __EOS__-joined context, keeping the separator"""
        return f" {EOS} ".join(self.utterance(u) for u in split_context(context))


def split_context(context: str) -> List[str]:
    return [part.strip() for part in context.split(EOS)]


def sequence_tokens(text: str, keep_eos: bool = True) -> List[str]:
    """Tokens of a context or response; utterance boundaries become EOS tokens when keep_eos"""
    tokens: List[str] = []
    for i, utterance in enumerate(split_context(text)):
        if i and keep_eos:
            tokens.append(EOS)
        tokens.extend(tokenize(utterance))
    return tokens


# ---------- Vocabulary ----------
@dataclass
class Vocabulary:
    tokens: List[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    index: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_INDEX)

    def decode(self, indices: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in indices]


def build_vocab(streams: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Tokens with frequency >= min_count, by descending frequency then lexicographic"""
    counts: Counter = Counter()
    for stream in streams:
        counts.update(stream)
    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)
    kept = sorted((tok for tok, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    vocab = Vocabulary(tokens=[PAD_TOKEN, UNK_TOKEN] + kept)
    logger.info(f"Vocabulary: {len(kept)} tokens kept of {len(counts)} (min_count={min_count})")
    return vocab


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int, keep: str = "tail") -> List[int]:
    """Map tokens to indices; over-long sequences keep the last (tail) or first (head) max_len"""
    indices = [vocab.lookup(t) for t in tokens]
    if len(indices) > max_len:
        indices = indices[-max_len:] if keep == "tail" else indices[:max_len]
    return indices
