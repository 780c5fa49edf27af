"""
Exceptions shared by the corpus pipeline and the rankers
"""
from typing import Optional


class DialogueToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class LogParseError(DialogueToolkitError):
    """A chat-log line that looks like a message but cannot be parsed"""

    def __init__(self, line: str, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"{reason}: {line!r}")


class ConfigError(DialogueToolkitError):
    pass


class InvalidDialogueError(DialogueToolkitError):
    pass


class GenerationError(DialogueToolkitError):
    pass


class FitError(DialogueToolkitError):
    pass


class CheckpointError(DialogueToolkitError):
    pass


class TrainingError(DialogueToolkitError):
    """Numeric failure during training (non-finite loss or gradient)"""

    def __init__(self, message: str, batch_id: Optional[int] = None):
        self.batch_id = batch_id
        if batch_id is not None:
            message = f"{message} (batch {batch_id})"
        super().__init__(message)
