"""Chat-completion clients: HTTP, concurrency-bounded wrapper and offline mock."""

from .types import (
    LLM,
    ChatMessage,
    ChatPrompt,
    ClientRequestError,
    LLMError,
    LLMTimeoutError,
    MockPromptError,
    ProtocolError,
    RateLimitError,
    TransportError,
)
from .http import API_KEY_ENV, BoundedLLM, EndpointConfig, HttpChatClient
from .mock import mock_complete

__all__ = [
    "LLM", "ChatMessage", "ChatPrompt", "ClientRequestError", "LLMError", "LLMTimeoutError",
    "MockPromptError", "ProtocolError", "RateLimitError", "TransportError", "API_KEY_ENV",
    "BoundedLLM", "EndpointConfig", "HttpChatClient", "mock_complete",
]
