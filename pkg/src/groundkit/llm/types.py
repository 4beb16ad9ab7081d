"""Chat prompt value type and the client error hierarchy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatPrompt:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs or msgs[0].role != "system":
            raise ValueError("first message must have role 'system'")
        expected = "user"
        for i, m in enumerate(msgs[1:], 1):
            if m.role not in ROLES:
                raise ValueError(f"message {i}: unknown role {m.role!r}")
            if m.role != expected:
                raise ValueError(f"message {i}: expected role {expected!r}, got {m.role!r}")
            expected = "assistant" if expected == "user" else "user"
        if msgs[-1].role != "user":
            raise ValueError("last message must be a user turn")
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_turns(cls, system: str, examples: Sequence[tuple[str, str]], user: str,
                   temperature: float = 0.0, max_tokens: int = 512) -> "ChatPrompt":
        """System text, in-context (user, assistant) pairs, then the new user turn."""
        messages = [ChatMessage("system", system)]
        for u, a in examples:
            messages += [ChatMessage("user", u), ChatMessage("assistant", a)]
        messages.append(ChatMessage("user", user))
        return cls(tuple(messages), temperature=temperature, max_tokens=max_tokens)

    @property
    def system(self) -> str:
        return self.messages[0].content

    @property
    def final_user(self) -> str:
        return self.messages[-1].content

    def examples(self) -> list[tuple[str, str]]:
        """In-context (user, assistant) pairs between the system and final user turns."""
        body = self.messages[1:-1]
        return [(body[i].content, body[i + 1].content) for i in range(0, len(body) - 1, 2)]

    def to_messages(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.messages]

    def render(self) -> str:
        """Canonical text form, used for byte-level comparisons."""
        parts = [f"[{m.role}]\n{m.content}" for m in self.messages]
        return "\n\n".join(parts)


LLM = Callable[[ChatPrompt], str]


class LLMError(Exception):
    """Base class for completion failures."""


class TransportError(LLMError):
    """Connection failure or server error that persisted through retries."""


class LLMTimeoutError(TransportError):
    pass


class RateLimitError(TransportError):
    """HTTP 429 persisted through all retries."""


class ClientRequestError(LLMError):
    """Non-retryable 4xx response."""

    def __init__(self, status: int, body: str):
        self.status = status
        super().__init__(f"HTTP {status}: {body[:200]}")


class ProtocolError(LLMError):
    """Response did not have the expected shape."""


class MockPromptError(LLMError):
    """The mock was given a prompt it does not recognise."""
