"""
Download client for the MNIST-family IDX archives.

Each file is fetched as `<stem>.gz`, its decompressed header is verified
before anything touches the destination, and the write goes through a
temporary file plus os.replace so a verified slot is never left half-written.
"""

import gzip
import os
import tempfile
from typing import List, Optional

import httpx
from tenacity import Retrying, retry_if_exception, stop_after_attempt, wait_exponential

from .config import CONFIG, DATASET_URLS, IDX_FILES
from .data import parse_idx_images, parse_idx_labels, read_idx_bytes
from .exceptions import FetchError, IdxFormatError, IdxTruncatedError
from .logger import logger


def _verify(blob: bytes, stem: str, source: str) -> int:
    """Parse the full payload; returns the item count."""
    if blob[:2] == b"\x1f\x8b":
        try:
            blob = gzip.decompress(blob)
        except (EOFError, gzip.BadGzipFile) as e:
            raise IdxTruncatedError(f"{source}: corrupt gzip stream: {e}") from e
    parse = parse_idx_images if "images" in stem else parse_idx_labels
    return len(parse(blob, source))


def _is_transient(error: BaseException) -> bool:
    """Connection failures and 5xx answers are worth another attempt; 4xx are not."""
    if isinstance(error, httpx.TransportError):
        return True
    return isinstance(error, httpx.HTTPStatusError) and error.response.status_code >= 500


class DatasetFetcher:
    """Fetches the four IDX files of one dataset into a directory."""

    def __init__(
        self,
        dataset: str,
        dest_dir: str,
        client: Optional[httpx.Client] = None,
        timeout: float = None,
        max_attempts: int = None,
        retry_wait: float = None,
    ):
        if dataset not in DATASET_URLS:
            raise FetchError(f"Unknown dataset '{dataset}', expected one of {sorted(DATASET_URLS)}")
        self.dataset = dataset
        self.base_url = DATASET_URLS[dataset]
        self.dest_dir = dest_dir
        self.timeout = timeout or CONFIG["fetch"]["timeout"]
        self.max_attempts = max_attempts or CONFIG["fetch"]["max_attempts"]
        self.retry_wait = CONFIG["fetch"]["retry_wait"] if retry_wait is None else retry_wait
        self.client = client or httpx.Client(timeout=self.timeout, follow_redirects=True)

    def is_valid(self, path: str, stem: str) -> bool:
        if not os.path.exists(path):
            return False
        try:
            _verify(read_idx_bytes(path), stem, path)
            return True
        except (IdxFormatError, IdxTruncatedError) as e:
            logger.warning(f"Cached file {path} failed verification ({e}); downloading again")
            return False

    def _download(self, url: str) -> bytes:
        retrying = Retrying(
            wait=wait_exponential(multiplier=self.retry_wait, min=self.retry_wait, max=60),
            stop=stop_after_attempt(self.max_attempts),
            retry=retry_if_exception(_is_transient),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                response = self.client.get(url)
                response.raise_for_status()
                return response.content

    def fetch_file(self, stem: str) -> str:
        path = os.path.join(self.dest_dir, stem + ".gz")
        if self.is_valid(path, stem):
            logger.info(f"{path} already present and valid, skipping")
            return path

        url = self.base_url + stem + ".gz"
        logger.info(f"Downloading {url}")
        try:
            blob = self._download(url)
        except httpx.HTTPError as e:
            raise FetchError(f"Download of {url} failed: {e}") from e
        try:
            count = _verify(blob, stem, url)
        except (IdxFormatError, IdxTruncatedError) as e:
            raise FetchError(f"Downloaded {url} is not a valid IDX file: {e}") from e

        fd, tmp_path = tempfile.mkstemp(dir=self.dest_dir, prefix=f".{stem}.", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(blob)
            os.replace(tmp_path, path)
        except OSError:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise
        logger.debug(f"Saved {count} items to {path}")
        return path

    def fetch(self) -> List[str]:
        os.makedirs(self.dest_dir, exist_ok=True)
        paths = []
        for split in ("train", "test"):
            for stem in IDX_FILES[split]:
                paths.append(self.fetch_file(stem))
        return paths
