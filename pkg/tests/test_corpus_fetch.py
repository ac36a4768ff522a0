import httpx
import pytest

from core.errors import CorpusError
from services.corpus_fetch_service import CorpusFetchService, strip_boilerplate, to_sentences
from tasks import corpus as corpus_mod

BOOK = (
    "The Project Gutenberg eBook of Tales\r\n"
    "License text that must not reach the corpus.\r\n"
    "*** START OF THE PROJECT GUTENBERG EBOOK TALES ***\r\n"
    "\r\n"
    "THE FROG KING\r\n"
    "\r\n"
    "In olden times, when wishing still helped one, there lived a king.\r\n"
    "His daughters were all beautiful. The youngest was so\r\n"
    "beautiful that the sun itself was astonished!\r\n"
    "\r\n"
    "*** END OF THE PROJECT GUTENBERG EBOOK TALES ***\r\n"
    "More license text.\r\n"
)


def gutenberg(books):
    def handler(request: httpx.Request) -> httpx.Response:
        book = int(request.url.path.rsplit("/pg", 1)[1].split(".")[0])
        if book not in books:
            return httpx.Response(404)
        return httpx.Response(200, content=books[book].encode("utf-8"))

    return httpx.Client(transport=httpx.MockTransport(handler))


def test_boilerplate_is_dropped():
    body = strip_boilerplate(BOOK)
    assert "License" not in body
    assert "THE FROG KING" in body


def test_missing_start_marker_is_a_corpus_error():
    with pytest.raises(CorpusError):
        strip_boilerplate("just some text\n")


def test_wrapped_paragraphs_become_sentences():
    assert to_sentences(strip_boilerplate(BOOK)) == [
        "THE FROG KING",
        "In olden times, when wishing still helped one, there lived a king.",
        "His daughters were all beautiful.",
        "The youngest was so beautiful that the sun itself was astonished!",
    ]


def test_fetch_writes_a_loadable_corpus(tmp_path):
    out = tmp_path / "corpus" / "gutenberg.txt"
    service = CorpusFetchService(client=gutenberg({1: BOOK, 2: BOOK}))
    assert service.fetch(out, books=[1, 2]) == out
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 8
    corpus = corpus_mod.load_corpus(out, valid_fraction=0.25, test_fraction=0.25)
    assert corpus.decode(corpus.encode(lines[0])) == lines[0]


def test_existing_corpus_is_kept_unless_overwrite(tmp_path):
    out = tmp_path / "gutenberg.txt"
    out.write_text("kept\n", encoding="utf-8")
    service = CorpusFetchService(client=gutenberg({1: BOOK}))
    service.fetch(out, books=[1])
    assert out.read_text(encoding="utf-8") == "kept\n"
    service.fetch(out, books=[1], overwrite=True)
    assert out.read_text(encoding="utf-8").startswith("THE FROG KING\n")


def test_http_failure_is_a_corpus_error(tmp_path):
    service = CorpusFetchService(client=gutenberg({}))
    with pytest.raises(CorpusError):
        service.fetch(tmp_path / "gutenberg.txt", books=[99])
    assert not (tmp_path / "gutenberg.txt").exists()
