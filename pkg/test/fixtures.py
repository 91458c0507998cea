"""
Shared fixtures: a camera body cover category, a bag category, stub
encoders and fake HTTP sessions
"""

import os
import json
import shutil
import tempfile
import unittest

import numpy as np

from valuerag.corpus import LabelValue, Product
from valuerag.embedding import Encoder, HashedNgramEncoder, normalize
from valuerag.retrieval import Retriever, build_product_index, build_value_index
from valuerag.taxonomy import Taxonomy

BODY_COVER = 'SLR body cover'
BAG = 'Bag'

TAXONOMY_ENTRIES = [
    (BODY_COVER, 'Brand', ['Nikon', 'Canon', 'Sony']),
    (BODY_COVER, 'Condition', ['brand new', 'slight signs of use', 'obvious signs of use']),
    (BAG, 'Brand', ['LV', 'Dior', 'Channel']),
]


def taxonomy():
    return Taxonomy(TAXONOMY_ENTRIES)


def labeled(product_id, title, description, category, labels, source=None):
    """
    Product with in_taxonomy flags looked up from source taxonomy
    """
    source = source or taxonomy()
    return Product(product_id, title, description, category, dict(
        (attribute, tuple(LabelValue(value, source.contains(category, attribute, value)) for value in values))
        for attribute, values in labels.items()
    ))


def nikon_product():
    return labeled('p1', 'Nikon D810 body cover', 'button set', BODY_COVER, {
        'Brand': ['Nikon'],
        'Condition': [],
    })


def reference_products():
    return [
        labeled('r1', 'Canon 60d back cover set', 'button set button', BODY_COVER, {
            'Brand': ['Canon'],
            'Condition': ['slight signs of use'],
        }),
        labeled('r2', 'Nikon D7100 body cover', 'lightly used', BODY_COVER, {
            'Brand': ['Nikon'],
            'Condition': [],
        }),
        labeled('b1', 'Chanel new sale S engraved 19 black gold small size', '', BAG, {
            'Brand': ['Channel'],
        }),
    ]


def builtin_retriever(source, pool, k=4, m=2):
    encoder = HashedNgramEncoder()
    return Retriever(
        source,
        build_value_index(source, encoder),
        build_product_index(pool, source, encoder),
        encoder, encoder, k, m,
    )


class StubEncoder(Encoder):
    """
    Encoder returning fixed vectors by text, the zero vector otherwise
    """
    def __init__(self, vectors, dim, identity='stub'):
        self.vectors = vectors
        self.dim = dim
        self.identity = identity
        self.calls = 0

    def encode_batch(self, texts):
        self.calls += 1
        return [
            normalize(self.vectors[text]) if text in self.vectors else np.zeros(self.dim)
            for text in texts
        ]


class FakeResponse(object):
    def __init__(self, data=None, status_code=200, text=None, reason='OK'):
        self.data = data
        self.status_code = status_code
        self.text = text
        self.reason = reason

    def json(self):
        if self.text is not None:
            return json.loads(self.text)
        return self.data


class FakeSession(object):
    """
    Records posted payloads and answers from a list, or from a callable
    receiving the decoded payload
    """
    def __init__(self, responses):
        self.responses = responses
        self.calls = []

    def post(self, url, data=None, headers=None, timeout=None, verify=True):
        payload = json.loads(data)
        self.calls.append((url, payload, headers))
        if callable(self.responses):
            result = self.responses(payload)
        else:
            result = self.responses.pop(0)
        if isinstance(result, Exception):
            raise result
        return result


def embedding_response(vectors):
    return FakeResponse({'data': [
        {'embedding': [float(x) for x in vector], 'index': index}
        for index, vector in enumerate(vectors)
    ]})


def chat_response(content):
    return FakeResponse({'choices': [{'message': {'role': 'assistant', 'content': content}}]})


class TempDirTestCase(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix='valuerag-test-')

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def path(self, *names):
        return os.path.join(self.tmpdir, *names)

    def write_text(self, name, text):
        with open(self.path(name), 'w', encoding='utf-8') as fd:
            fd.write(text)
        return self.path(name)

    def write_lines(self, name, records):
        return self.write_text(name, ''.join('%s\n' % json.dumps(record) for record in records))

    def read_bytes(self, *names):
        with open(self.path(*names), 'rb') as fd:
            return fd.read()
