import logging
import os
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import requests
from requests.adapters import HTTPAdapter, Retry

from delineo.core.errors import BackendError, ConfigError
from delineo.core.typing import *

logger = logging.getLogger(__name__)

ROLES = ('system', 'user', 'assistant')
SCRIPT_SUFFIXES = ('.txt', '.md', '.json')


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        assert self.role in ROLES, f"unknown chat role {self.role}"

    def to_dict(self) -> Dict[str, str]:
        return {'role': self.role, 'content': self.content}


class PlannerBackend(ABC):
    """
    Anything that turns a role-tagged transcript into one completion text
    """

    name = 'backend'

    @abstractmethod
    def complete(self, messages: Sequence[ChatMessage]) -> str:
        raise NotImplementedError


class ScriptedBackend(PlannerBackend):
    """
    Replays canned completions in order and repeats the last one once the script runs out. Safe to share
    between threads, though interleaved planning loops then consume one script.
    """

    name = 'scripted'

    def __init__(self, completions: Sequence[str]):
        assert completions, "a scripted backend needs at least one completion"
        self._completions = tuple(completions)
        self._cursor = 0
        self._lock = threading.Lock()

    @staticmethod
    def from_directory(path: PathLike) -> 'ScriptedBackend':
        path = Path(path)
        files = sorted(p for p in path.iterdir() if p.suffix in SCRIPT_SUFFIXES)
        if not files:
            raise ConfigError(f"no scripted completions ({', '.join(SCRIPT_SUFFIXES)}) in {path}")
        return ScriptedBackend([p.read_text(encoding='utf-8') for p in files])

    @property
    def calls(self) -> int:
        return self._cursor

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        with self._lock:
            completion = self._completions[min(self._cursor, len(self._completions) - 1)]
            self._cursor += 1
        return completion


class RemoteBackend(PlannerBackend):
    """
    Chat-completion endpoint speaking the common messages-array JSON shape. The API key is read from the
    environment variable named by `api_key_env` when the backend is built, before any network traffic.
    """

    name = 'remote'

    def __init__(self, base_url: str, model: str, api_key_env: str = 'OPENAI_API_KEY', timeout: float = 60.0,
                 temperature: Optional[float] = None, max_retries: int = 3):
        api_key = os.environ.get(api_key_env, '').strip()
        if not api_key:
            raise ConfigError(f"environment variable {api_key_env} holding the API key is not set")
        self.url = base_url.rstrip('/') + '/chat/completions'
        self.model = model
        self.timeout = timeout
        self.temperature = temperature
        self.max_retries = max_retries
        self._headers = {'Content-Type': 'application/json', 'Authorization': f"Bearer {api_key}"}
        self._local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._local, 'session', None)
        if session is None:
            retry = Retry(total=self.max_retries, backoff_factor=1.0,
                          status_forcelist=[408, 429, 500, 502, 503, 504], allowed_methods=['POST'])
            session = requests.Session()
            session.mount('http://', HTTPAdapter(max_retries=retry))
            session.mount('https://', HTTPAdapter(max_retries=retry))
            self._local.session = session
        return session

    def request_body(self, messages: Sequence[ChatMessage]) -> dict:
        body = {'model': self.model, 'messages': [m.to_dict() for m in messages]}
        if self.temperature is not None:
            body['temperature'] = self.temperature
        return body

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        try:
            response = self._session().post(self.url, headers=self._headers, json=self.request_body(messages),
                                            timeout=self.timeout)
            response.raise_for_status()
            content = response.json()['choices'][0]['message']['content']
        except requests.exceptions.RequestException as e:
            logger.warning("chat completion request to %s failed: %s", self.url, e)
            raise BackendError(f"chat completion request failed: {e}") from e
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"unexpected chat completion response: {e!r}") from e
        if not isinstance(content, str) or not content.strip():
            raise BackendError("chat completion returned no content")
        return content
