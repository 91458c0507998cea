"""
Text encoders and vector math

Two encoders implement the same contract: the deterministic hashed
character 3-gram encoder used by default, and a client for a remote
embedding service.
"""

import unicodedata

import numpy as np

from valuerag.log import Logger
from valuerag.request import JSONRequest, DEFAULT_MAX_ATTEMPTS, DEFAULT_TIMEOUT, DEFAULT_MAX_IN_FLIGHT

BUILTIN_DIM = 256
NGRAM = 3
FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3
MASK64 = 0xffffffffffffffff
NORM_TOLERANCE = 1e-6
ZERO_SCORE = float('-inf')


class EmbeddingError(Exception):
    def __str__(self):
        return self.args[0]


class DimensionMismatchError(EmbeddingError):
    pass


class MalformedResponseError(EmbeddingError):
    pass


def fnv1a_64(data):
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def normalize(vector):
    """
    L2-normalized float64 copy; the zero vector stays zero
    """
    vector = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise EmbeddingError('Vector has non-finite components')
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        return vector.copy()
    return vector / norm


def is_zero(vector):
    return not np.any(vector)


def hashed_ngram_encode(text, dim=BUILTIN_DIM):
    """
    Signed feature hashing of character 3-grams

    Text is NFC normalized and lowercased, every 3-gram is hashed with
    64-bit FNV-1a over its UTF-8 bytes, bucket is hash mod dim and the sign
    is taken from bit 63. Texts shorter than 3 characters give the zero
    vector.
    """
    text = unicodedata.normalize('NFC', text).lower()
    vector = np.zeros(dim, dtype=np.float64)
    for i in range(len(text) - NGRAM + 1):
        h = fnv1a_64(text[i:i + NGRAM].encode('utf-8'))
        vector[h % dim] += -1.0 if (h >> 63) & 1 else 1.0
    return normalize(vector)


def cosine(a, b):
    """
    Cosine similarity clamped to [-1, 1]; ZERO_SCORE when either is zero
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError('Dimension mismatch: %d != %d' % (a.size, b.size))
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return ZERO_SCORE
    return float(min(1.0, max(-1.0, np.dot(a, b) / (na * nb))))


def cosine_scores(query, matrix):
    """
    Cosine of query against every row of matrix, ZERO_SCORE for zero rows
    """
    query = np.asarray(query, dtype=np.float64)
    if matrix.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    if matrix.shape[1] != query.size:
        raise DimensionMismatchError('Dimension mismatch: %d != %d' % (matrix.shape[1], query.size))
    qnorm = np.linalg.norm(query)
    norms = np.linalg.norm(matrix, axis=1)
    if qnorm == 0.0:
        return np.full(matrix.shape[0], ZERO_SCORE)
    with np.errstate(divide='ignore', invalid='ignore'):
        scores = np.clip(matrix.dot(query) / (norms * qnorm), -1.0, 1.0)
    scores[norms == 0.0] = ZERO_SCORE
    return scores


class Encoder(object):
    """
    Encoder contract: identity, dim and encode_batch(texts)
    """
    identity = None
    dim = None

    def encode(self, text):
        return self.encode_batch([text])[0]

    def encode_batch(self, texts):
        raise NotImplementedError


class HashedNgramEncoder(Encoder):
    """
    Deterministic built-in encoder
    """
    def __init__(self, dim=BUILTIN_DIM):
        self.dim = dim
        self.identity = 'hashed-ngram-fnv1a-%d/%d' % (NGRAM, dim)

    def __repr__(self):
        return self.identity

    def encode(self, text):
        return hashed_ngram_encode(text, self.dim)

    def encode_batch(self, texts):
        return [hashed_ngram_encode(text, self.dim) for text in texts]


class RemoteEncoder(Encoder):
    """
    Client for an embedding endpoint speaking

        request  {"model": ..., "input": [...]}
        response {"data": [{"embedding": [...], "index": 0}, ...]}

    Vectors are L2-normalized locally. dim is taken from configuration, or
    from the first response when configured as 0.
    """
    def __init__(self, url, model, token_env=None, dim=0, max_batch=32,
                 timeout=DEFAULT_TIMEOUT, attempts=DEFAULT_MAX_ATTEMPTS,
                 max_in_flight=DEFAULT_MAX_IN_FLIGHT, session=None):
        self.log = Logger('embedding').default_stream
        self.model = model
        self.dim = dim or None
        self.max_batch = max_batch
        self.identity = 'remote:%s@%s' % (model, url)
        self.request = JSONRequest(
            url,
            token_env=token_env,
            attempts=attempts,
            timeout=timeout,
            max_in_flight=max_in_flight,
            stage='embedding',
            session=session,
        )

    def __repr__(self):
        return self.identity

    def __decode__(self, texts, data):
        rows = data.get('data')
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise MalformedResponseError('%s returned %s vectors for %d texts' % (
                self.identity, isinstance(rows, list) and len(rows) or 'no', len(texts)
            ))
        vectors = [None] * len(texts)
        for position, row in enumerate(rows):
            if not isinstance(row, dict) or not isinstance(row.get('embedding'), list):
                raise MalformedResponseError('%s returned a row without embedding' % self.identity)
            index = row.get('index', position)
            if not isinstance(index, int) or index < 0 or index >= len(texts) or vectors[index] is not None:
                raise MalformedResponseError('%s returned invalid index %r' % (self.identity, index))
            try:
                vector = np.asarray(row['embedding'], dtype=np.float64)
            except (TypeError, ValueError):
                raise MalformedResponseError('%s returned non-numeric embedding' % self.identity)
            if vector.ndim != 1 or vector.size == 0:
                raise MalformedResponseError('%s returned an empty embedding' % self.identity)
            if self.dim is None:
                self.dim = vector.size
            if vector.size != self.dim:
                raise DimensionMismatchError('%s returned dimension %d, expected %d' % (
                    self.identity, vector.size, self.dim
                ))
            try:
                vectors[index] = normalize(vector)
            except EmbeddingError as emsg:
                raise MalformedResponseError('%s: %s' % (self.identity, emsg))
        return vectors

    def encode_batch(self, texts):
        texts = list(texts)
        vectors = []
        for start in range(0, len(texts), self.max_batch):
            chunk = texts[start:start + self.max_batch]
            data = self.request.post({'model': self.model, 'input': chunk})
            vectors.extend(self.__decode__(chunk, data))
        self.log.debug('encoded %d texts with %s' % (len(texts), self.identity))
        return vectors


def remote_encode_batch(texts, endpoint, session=None):
    """
    Encode texts with a remote endpoint described by a config mapping
    """
    return encoder_from_config(dict(endpoint, kind='remote'), session=session).encode_batch(texts)


def encoder_from_config(section, session=None):
    """
    Build an encoder from a validated [value_encoder] / [product_encoder] section
    """
    if section.get('kind', 'builtin') == 'builtin':
        return HashedNgramEncoder(section.get('dim') or BUILTIN_DIM)
    return RemoteEncoder(
        url=section['url'],
        model=section['model'],
        token_env=section.get('token_env'),
        dim=section.get('dim', 0),
        max_batch=section.get('max_batch', 32),
        timeout=section.get('timeout', DEFAULT_TIMEOUT),
        attempts=section.get('attempts', DEFAULT_MAX_ATTEMPTS),
        max_in_flight=section.get('max_in_flight', DEFAULT_MAX_IN_FLIGHT),
        session=session,
    )
