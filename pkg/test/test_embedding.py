"""
Test the built-in hashed n-gram encoder, cosine scoring and remote encoders
"""

import unittest

import numpy as np

from valuerag.embedding import (
    BUILTIN_DIM, ZERO_SCORE, DimensionMismatchError, EmbeddingError, HashedNgramEncoder,
    MalformedResponseError, RemoteEncoder, cosine, cosine_scores, encoder_from_config, fnv1a_64,
    hashed_ngram_encode, is_zero, normalize, remote_encode_batch,
)

from test.fixtures import FakeResponse, FakeSession, embedding_response

URL = 'https://embeddings.example.com/v1/embeddings'


class test_builtin_encoder(unittest.TestCase):
    def test_fnv1a(self):
        self.assertEqual(fnv1a_64(b''), 0xcbf29ce484222325)
        self.assertEqual(fnv1a_64(b'a'), 0xaf63dc4c8601ec8c)

    def test_deterministic(self):
        self.assertTrue(np.array_equal(hashed_ngram_encode('abc'), hashed_ngram_encode('abc')))
        self.assertEqual(hashed_ngram_encode('abc').tobytes(), HashedNgramEncoder().encode('abc').tobytes())

    def test_short_text_is_zero(self):
        self.assertTrue(is_zero(hashed_ngram_encode('ab')))
        self.assertTrue(is_zero(hashed_ngram_encode('')))
        self.assertEqual(hashed_ngram_encode('ab').shape, (BUILTIN_DIM,))

    def test_unit_norm(self):
        for text in ('abc', 'nikon d810 body cover', 'Chanel 小号 black'):
            self.assertAlmostEqual(np.linalg.norm(hashed_ngram_encode(text)), 1.0, delta=1e-6)

    def test_case_insensitive(self):
        self.assertTrue(np.array_equal(hashed_ngram_encode('Nikon'), hashed_ngram_encode('nikon')))

    def test_similar_texts_score_higher(self):
        query = hashed_ngram_encode('nikon d810 body cover')
        near = hashed_ngram_encode('nikon d7100 body cover')
        far = hashed_ngram_encode('chanel jacket size 36')
        self.assertGreater(cosine(query, near), cosine(query, far))

    def test_identity(self):
        self.assertEqual(HashedNgramEncoder().identity, 'hashed-ngram-fnv1a-3/256')
        self.assertEqual(HashedNgramEncoder(64).encode_batch(['abcd'])[0].shape, (64,))


class test_cosine(unittest.TestCase):
    def test_self_similarity(self):
        rng = np.random.RandomState(3)
        for _ in range(20):
            v = rng.normal(size=16)
            self.assertAlmostEqual(cosine(v, v), 1.0, delta=1e-6)
            self.assertAlmostEqual(cosine(v, 3 * v), 1.0, delta=1e-6)
            w = rng.normal(size=16)
            self.assertAlmostEqual(cosine(v, w), cosine(w, v), delta=1e-9)

    def test_orthogonal(self):
        self.assertEqual(cosine([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), 0.0)
        self.assertEqual(cosine([1.0, 0.0], [-2.0, 0.0]), -1.0)

    def test_zero_vector(self):
        self.assertEqual(cosine([0.0, 0.0], [1.0, 0.0]), ZERO_SCORE)
        self.assertEqual(cosine([1.0, 0.0], [0.0, 0.0]), ZERO_SCORE)

    def test_dimension_mismatch(self):
        self.assertRaises(DimensionMismatchError, cosine, [1.0, 0.0], [1.0, 0.0, 0.0])
        self.assertRaises(DimensionMismatchError, cosine_scores, np.ones(3), np.ones((2, 2)))

    def test_scores_match_pairwise(self):
        rng = np.random.RandomState(11)
        matrix = rng.normal(size=(30, 8))
        matrix[4] = 0.0
        query = rng.normal(size=8)
        scores = cosine_scores(query, matrix)
        for row, score in zip(matrix, scores):
            expected = cosine(query, row)
            if expected == ZERO_SCORE:
                self.assertEqual(score, ZERO_SCORE)
            else:
                self.assertAlmostEqual(score, expected, delta=1e-12)
        self.assertTrue(np.all(cosine_scores(np.zeros(8), matrix) == ZERO_SCORE))

    def test_normalize(self):
        self.assertTrue(is_zero(normalize([0.0, 0.0])))
        self.assertAlmostEqual(np.linalg.norm(normalize([3.0, 4.0])), 1.0, delta=1e-12)
        self.assertRaises(EmbeddingError, normalize, [float('nan'), 1.0])


class test_remote_encoder(unittest.TestCase):
    def test_two_texts(self):
        session = FakeSession([embedding_response([[3.0, 4.0, 0.0], [0.0, 0.0, 2.0]])])
        encoder = RemoteEncoder(URL, 'bge', session=session)
        vectors = encoder.encode_batch(['first', 'second'])
        self.assertEqual(len(vectors), 2)
        self.assertEqual(vectors[0].shape, vectors[1].shape)
        self.assertEqual(encoder.dim, 3)
        for vector in vectors:
            self.assertTrue(1 - 1e-6 <= np.linalg.norm(vector) <= 1 + 1e-6)
        self.assertEqual(session.calls[0][1], {'model': 'bge', 'input': ['first', 'second']})
        self.assertEqual(encoder.identity, 'remote:bge@%s' % URL)

    def test_out_of_order_rows(self):
        session = FakeSession([FakeResponse({'data': [
            {'embedding': [0.0, 1.0], 'index': 1},
            {'embedding': [1.0, 0.0], 'index': 0},
        ]})])
        vectors = RemoteEncoder(URL, 'bge', session=session).encode_batch(['a', 'b'])
        self.assertEqual(list(vectors[0]), [1.0, 0.0])
        self.assertEqual(list(vectors[1]), [0.0, 1.0])

    def test_missing_vector(self):
        session = FakeSession([embedding_response([[1.0, 0.0]])])
        encoder = RemoteEncoder(URL, 'bge', session=session)
        self.assertRaises(MalformedResponseError, encoder.encode_batch, ['a', 'b'])

    def test_malformed_rows(self):
        for data in (
            {'vectors': []},
            {'data': [{'embedding': 'abc', 'index': 0}]},
            {'data': [{'embedding': [1.0, 'x'], 'index': 0}]},
            {'data': [{'embedding': [], 'index': 0}]},
            {'data': [{'embedding': [1.0], 'index': 5}]},
        ):
            encoder = RemoteEncoder(URL, 'bge', session=FakeSession([FakeResponse(data)]))
            self.assertRaises(MalformedResponseError, encoder.encode_batch, ['a'])

    def test_dimension_mismatch(self):
        session = FakeSession([embedding_response([[1.0, 0.0, 0.0, 0.0]])])
        encoder = RemoteEncoder(URL, 'bge', dim=3, session=session)
        self.assertRaises(DimensionMismatchError, encoder.encode_batch, ['a'])

    def test_batches(self):
        session = FakeSession(lambda payload: embedding_response([[1.0, float(i)] for i in range(len(payload['input']))]))
        encoder = RemoteEncoder(URL, 'bge', max_batch=2, session=session)
        self.assertEqual(len(encoder.encode_batch(['a', 'b', 'c', 'd', 'e'])), 5)
        self.assertEqual([len(payload['input']) for url, payload, headers in session.calls], [2, 2, 1])

    def test_remote_encode_batch(self):
        session = FakeSession([embedding_response([[0.0, 2.0]]), embedding_response([[5.0, 0.0]])])
        endpoint = {'url': URL, 'model': 'bge', 'max_batch': 1}
        vectors = remote_encode_batch(['a', 'b'], endpoint, session=session)
        self.assertEqual([list(vector) for vector in vectors], [[0.0, 1.0], [1.0, 0.0]])
        self.assertEqual([payload['input'] for url, payload, headers in session.calls], [['a'], ['b']])
        self.assertEqual(endpoint, {'url': URL, 'model': 'bge', 'max_batch': 1})

    def test_from_config(self):
        self.assertEqual(encoder_from_config({'kind': 'builtin', 'dim': 0}).identity, 'hashed-ngram-fnv1a-3/256')
        encoder = encoder_from_config(
            {'kind': 'remote', 'url': URL, 'model': 'bge', 'token_env': 'X', 'dim': 3},
            session=FakeSession([]),
        )
        self.assertIsInstance(encoder, RemoteEncoder)
        self.assertEqual(encoder.dim, 3)


suite = unittest.TestSuite([
    unittest.TestLoader().loadTestsFromTestCase(test_builtin_encoder),
    unittest.TestLoader().loadTestsFromTestCase(test_cosine),
    unittest.TestLoader().loadTestsFromTestCase(test_remote_encoder),
])
