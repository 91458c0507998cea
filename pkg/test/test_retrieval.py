"""
Test value and product retrieval against an exhaustive sorting oracle
"""

import time
import random
import unittest

import numpy as np

from valuerag.corpus import Product
from valuerag.embedding import HashedNgramEncoder, ZERO_SCORE, cosine
from valuerag.retrieval import (
    CandidateSet, ProductIndex, RetrievalError, SnapshotError, UnknownPartitionError,
    ValueCorpusEntry, ValueIndex, build_product_index, build_value_index, load_product_index,
    load_value_index, render_shot_labels, retrieve_products, retrieve_values, save_index, value_prompt,
)
from valuerag.taxonomy import NULL_MARKER

from test.fixtures import (
    BAG, BODY_COVER, StubEncoder, TempDirTestCase, builtin_retriever, nikon_product,
    reference_products, taxonomy,
)

DIM = 6


def oracle_ranking(query, rows, limit, exclude=None):
    """
    Score every row with pairwise cosine, full sort by (-score, key), cut
    """
    scored = [(cosine(query, vector), key, item) for key, item, vector in rows if key != exclude]
    scored.sort(key=lambda row: (-row[0], row[1]))
    return [(item, score) for score, key, item in scored[:limit]]


class test_value_retrieval(TempDirTestCase):
    def setUp(self):
        super(test_value_retrieval, self).setUp()
        self.taxonomy = taxonomy()
        self.encoder = HashedNgramEncoder()
        self.index = build_value_index(self.taxonomy, self.encoder)

    def test_value_prompt(self):
        self.assertEqual(value_prompt('Bag', 'Brand', 'LV'), 'a bag with brand being lv')
        self.assertEqual(value_prompt(BODY_COVER, 'Condition', 'slight  signs of use'),
                         'a slr body cover with condition being slight signs of use')

    def test_index_size(self):
        self.assertEqual(len(self.index), self.taxonomy.value_count)
        self.assertEqual(len(self.index.partitions), 3)
        self.assertEqual(self.index.max_partition_size, 3)
        self.assertEqual(self.index.partition(BAG, 'Brand').keys, ('LV', 'Dior', 'Channel'))

    def test_literal_value_ranks_first(self):
        candidates = retrieve_values('Nikon D810 body cover', BODY_COVER, 'Brand', 1, self.index, self.encoder)
        self.assertEqual(candidates.values, ['Nikon', NULL_MARKER])
        self.assertEqual(candidates.candidates[-1].score, ZERO_SCORE)

    def test_exhaustive_k(self):
        candidates = retrieve_values('Nikon D810 body cover', BODY_COVER, 'Brand', 10, self.index, self.encoder)
        self.assertEqual(sorted(candidates.real_values), sorted(self.taxonomy.values_of(BODY_COVER, 'Brand')))
        self.assertEqual(candidates.values[-1], NULL_MARKER)
        self.assertEqual(len(candidates), 4)

    def test_invalid_requests(self):
        self.assertRaises(RetrievalError, retrieve_values, 'x', BAG, 'Brand', 0, self.index, self.encoder)
        self.assertRaises(UnknownPartitionError, retrieve_values, 'x', BAG, 'Color', 1, self.index, self.encoder)
        self.assertRaises(RetrievalError, retrieve_values, 'x', BAG, 'Brand', 1, self.index, HashedNgramEncoder(64))

    def test_candidate_set_without(self):
        candidates = CandidateSet('Brand', [('Nikon', 0.9), ('Canon', 0.2), (NULL_MARKER, ZERO_SCORE)])
        self.assertEqual(candidates.without(['Nikon', NULL_MARKER]).values, ['Canon', NULL_MARKER])
        self.assertEqual(candidates.values, ['Nikon', 'Canon', NULL_MARKER])

    def test_matches_oracle(self):
        rng = np.random.RandomState(5)
        shared = [rng.normal(size=DIM) for _ in range(40)] + [np.zeros(DIM)]
        words = random.Random(5)
        values = []
        while len(values) < 600:
            value = ''.join(words.choice('abcdefghij') for _ in range(6))
            if value not in values:
                values.append(value)
        entries = [
            ValueCorpusEntry('C', 'A', value, value, shared[rng.randint(len(shared))])
            for value in values
        ]
        index = ValueIndex('stub', DIM, entries)
        queries = dict(('q%d' % i, rng.normal(size=DIM)) for i in range(100))
        encoder = StubEncoder(queries, DIM)
        rows = [(e.value, e.value, e.vector) for e in entries]

        started = time.time()
        for text in sorted(queries):
            k = rng.randint(1, 40)
            candidates = retrieve_values(text, 'C', 'A', k, index, encoder)
            expected = oracle_ranking(encoder.encode(text), rows, k)
            self.assertEqual(candidates.values, [value for value, score in expected] + [NULL_MARKER])
            for candidate, (value, score) in zip(candidates.candidates, expected):
                self.assertAlmostEqual(candidate.score, score, delta=1e-12)
        self.assertLess(time.time() - started, 5)

    def test_snapshot_round_trip(self):
        path = save_index(self.index, self.path('values.index'))
        loaded = load_value_index(path, self.encoder)
        self.assertEqual(len(loaded), len(self.index))
        for a, b in zip(loaded.entries, self.index.entries):
            self.assertEqual(a[:4], b[:4])
            self.assertEqual(a.vector.tobytes(), b.vector.tobytes())
        query = 'Chanel new sale black gold'
        self.assertEqual(
            retrieve_values(query, BAG, 'Brand', 2, loaded, self.encoder),
            retrieve_values(query, BAG, 'Brand', 2, self.index, self.encoder),
        )

    def test_snapshot_errors(self):
        path = save_index(self.index, self.path('values.index'))
        self.assertRaises(SnapshotError, load_value_index, path, HashedNgramEncoder(64))
        self.assertRaises(SnapshotError, load_value_index, self.path('missing.index'), self.encoder)
        self.assertRaises(SnapshotError, load_product_index, path, self.encoder, self.taxonomy)
        broken = self.write_text('broken.index', 'not a database')
        self.assertRaises(SnapshotError, load_value_index, broken, self.encoder)


class test_product_retrieval(TempDirTestCase):
    def setUp(self):
        super(test_product_retrieval, self).setUp()
        self.taxonomy = taxonomy()
        self.encoder = HashedNgramEncoder()
        self.pool = [nikon_product()] + reference_products()
        self.index = build_product_index(self.pool, self.taxonomy, self.encoder)

    def test_m_zero(self):
        self.assertEqual(retrieve_products('Nikon', BODY_COVER, 0, self.index, self.encoder), [])

    def test_same_category_only(self):
        shots = retrieve_products('Chanel black gold bag', BODY_COVER, 5, self.index, self.encoder)
        self.assertEqual(set(shot.product.category for shot in shots), set([BODY_COVER]))
        self.assertEqual(len(shots), 3)

    def test_self_match(self):
        query = 'Nikon D7100 body cover lightly used'
        shots = retrieve_products(query, BODY_COVER, 1, self.index, self.encoder)
        self.assertEqual(shots[0].product.id, 'r2')
        shots = retrieve_products(query, BODY_COVER, 1, self.index, self.encoder, exclude_id='r2')
        self.assertNotEqual(shots[0].product.id, 'r2')

    def test_empty_category_partition(self):
        index = build_product_index([nikon_product()], self.taxonomy, self.encoder)
        self.assertEqual(retrieve_products('Dior bag', BAG, 3, index, self.encoder), [])
        self.assertRaises(UnknownPartitionError, retrieve_products, 'x', 'Shoes', 1, index, self.encoder)

    def test_rendered_labels(self):
        product = Product('x', 't', '', BODY_COVER, {})
        self.assertEqual(list(render_shot_labels(product, ['Brand', 'Condition']).values()), [NULL_MARKER, NULL_MARKER])
        labels = render_shot_labels(reference_products()[0], ['Brand', 'Condition'])
        self.assertEqual(list(labels.items()), [('Brand', 'Canon'), ('Condition', 'slight signs of use')])

    def test_matches_oracle(self):
        rng = np.random.RandomState(17)
        shared = [rng.normal(size=DIM) for _ in range(30)]
        rows = []
        for i in range(100):
            product = Product('p%03d' % i, 'product %d' % i, '', 'C', {})
            rows.append((product, shared[rng.randint(len(shared))]))
        index = ProductIndex('stub', DIM, {'C': ['A']}, rows)
        queries = dict(('q%d' % i, rng.normal(size=DIM)) for i in range(100))
        encoder = StubEncoder(queries, DIM)
        oracle_rows = [(p.id, p, v) for p, v in rows]

        for text in sorted(queries):
            m = rng.randint(1, 8)
            exclude = rng.randint(2) and 'p%03d' % rng.randint(100) or None
            shots = retrieve_products(text, 'C', m, index, encoder, exclude_id=exclude)
            expected = oracle_ranking(encoder.encode(text), oracle_rows, m, exclude)
            self.assertEqual([s.product.id for s in shots], [p.id for p, score in expected])
        self.assertEqual(len(retrieve_products('q0', 'C', 5, index, encoder)), 5)

    def test_snapshot_round_trip(self):
        path = save_index(self.index, self.path('products.index'))
        loaded = load_product_index(path, self.encoder, self.taxonomy)
        self.assertEqual(list(loaded.products), list(self.index.products))
        query = 'Nikon body cover'
        self.assertEqual(
            [s.product.id for s in retrieve_products(query, BODY_COVER, 2, loaded, self.encoder)],
            [s.product.id for s in retrieve_products(query, BODY_COVER, 2, self.index, self.encoder)],
        )

    def test_retriever(self):
        retriever = builtin_retriever(self.taxonomy, self.pool, k=2, m=2)
        product = self.pool[0]
        candidates, shots = retriever.retrieve(product)
        self.assertEqual(list(candidates.keys()), ['Brand', 'Condition'])
        self.assertEqual(candidates['Brand'].values[0], 'Nikon')
        self.assertEqual(len(candidates['Brand']), 3)
        self.assertNotIn(product.id, [shot.product.id for shot in shots])
        self.assertEqual(len(shots), 2)


suite = unittest.TestSuite([
    unittest.TestLoader().loadTestsFromTestCase(test_value_retrieval),
    unittest.TestLoader().loadTestsFromTestCase(test_product_retrieval),
])
