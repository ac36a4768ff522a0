"""
Builds the full-size language-model corpus from public-domain Project Gutenberg
books: Grimm's Fairy Tales (2591), Andersen's Fairy Tales (1597) and Aesop's
Fables (11339), about 1 MB of text together.

The license header and footer of each book are dropped, hard-wrapped paragraphs
are rejoined and the result is written one sentence per line.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Iterable, List, Optional

import httpx

from config.settings import FETCHED_CORPUS
from core.errors import CorpusError, StorageError

logger = logging.getLogger(__name__)

GUTENBERG_URL = "https://www.gutenberg.org/cache/epub/{book}/pg{book}.txt"
DEFAULT_BOOKS = (2591, 1597, 11339)

_START = re.compile(r"^\*\*\*\s*START OF (?:THE|THIS) PROJECT GUTENBERG EBOOK[^\n]*$", re.MULTILINE | re.IGNORECASE)
_END = re.compile(r"^\*\*\*\s*END OF (?:THE|THIS) PROJECT GUTENBERG EBOOK", re.MULTILINE | re.IGNORECASE)
_SENTENCE_BREAK = re.compile(r"(?:(?<=[.!?])|(?<=[.!?][\"']))\s+(?=[\"'A-Z])")


def strip_boilerplate(text: str) -> str:
    """Text between the START and END markers of a Gutenberg plain-text file."""
    text = text.replace("\r\n", "\n")
    start = _START.search(text)
    if start is None:
        raise CorpusError("no Project Gutenberg START marker found")
    end = _END.search(text, start.end())
    return text[start.end():end.start() if end else len(text)]


def to_sentences(text: str) -> List[str]:
    sentences: List[str] = []
    for paragraph in re.split(r"\n\s*\n", text):
        joined = " ".join(paragraph.split())
        if joined:
            sentences.extend(s.strip() for s in _SENTENCE_BREAK.split(joined) if s.strip())
    return sentences


class CorpusFetchService:
    def __init__(self, client: Optional[httpx.Client] = None, timeout: float = 60.0):
        self._client = client
        self.timeout = timeout

    def fetch_book(self, client: httpx.Client, book: int) -> List[str]:
        url = GUTENBERG_URL.format(book=book)
        try:
            response = client.get(url)
            response.raise_for_status()
        except httpx.HTTPError as e:
            logger.error(f"Error downloading book {book}: {str(e)}")
            raise CorpusError(f"cannot download {url}: {e}") from e
        sentences = to_sentences(strip_boilerplate(response.content.decode("utf-8-sig", errors="replace")))
        logger.info(f"Book {book}: {len(sentences)} sentences")
        return sentences

    def fetch(
        self,
        out: "str | Path" = FETCHED_CORPUS,
        books: Iterable[int] = DEFAULT_BOOKS,
        overwrite: bool = False,
    ) -> Path:
        """Write the joined books to ``out``; an existing file is kept unless ``overwrite``."""
        path = Path(out)
        if path.exists() and not overwrite:
            logger.info(f"Corpus {path} already present")
            return path

        client = self._client or httpx.Client(timeout=self.timeout, follow_redirects=True)
        try:
            sentences = [s for book in books for s in self.fetch_book(client, book)]
        finally:
            if self._client is None:
                client.close()
        if not sentences:
            raise CorpusError("downloaded books contain no text")

        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(sentences) + "\n", encoding="utf-8")
        except OSError as e:
            logger.error(f"Error writing corpus {path}: {str(e)}")
            raise StorageError(f"cannot write {path}: {e}") from e
        logger.info(f"Wrote {len(sentences)} sentences to {path}")
        return path


__all__ = ["CorpusFetchService", "strip_boilerplate", "to_sentences", "DEFAULT_BOOKS", "GUTENBERG_URL"]
