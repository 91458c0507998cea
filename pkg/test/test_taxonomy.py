"""
Test taxonomy loading, lookups and validation
"""

import unittest

from valuerag.taxonomy import (
    InvalidTaxonomyError, Taxonomy, UnknownAttributeError, UnknownCategoryError,
    attribute_set, canonical, load_taxonomy, serialize_taxonomy, values_of,
)

from test.fixtures import BAG, BODY_COVER, TempDirTestCase, taxonomy


class test_taxonomy(TempDirTestCase):
    def test_load_single_record(self):
        path = self.write_lines('taxonomy.jsonl', [
            {'category': 'Bag', 'attribute': 'Brand', 'values': ['LV', 'Dior', 'Channel']},
        ])
        loaded = load_taxonomy(path)
        self.assertEqual(loaded.categories, ('Bag',))
        self.assertEqual(loaded.attribute_set('Bag'), ['Brand'])
        self.assertEqual(loaded.value_count, 3)
        self.assertEqual(values_of(loaded, 'Bag', 'Brand'), ['LV', 'Dior', 'Channel'])

    def test_empty_file(self):
        path = self.write_text('taxonomy.jsonl', '\n')
        with self.assertRaises(InvalidTaxonomyError) as context:
            load_taxonomy(path)
        self.assertEqual(str(context.exception), 'no categories')

    def test_duplicate_value(self):
        path = self.write_lines('taxonomy.jsonl', [
            {'category': 'Bag', 'attribute': 'Brand', 'values': ['LV', 'LV']},
        ])
        self.assertRaises(InvalidTaxonomyError, load_taxonomy, path)

    def test_invalid_records(self):
        for entries in (
            [('Bag', 'Brand', ['LV', 'None'])],
            [('Bag', 'Brand', [])],
            [('Bag', 'Brand', ['LV', ' '])],
            [('', 'Brand', ['LV'])],
            [('Bag', 'Brand', ['LV']), ('Bag', 'Brand', ['Dior'])],
        ):
            self.assertRaises(InvalidTaxonomyError, Taxonomy, entries)

    def test_missing_fields(self):
        path = self.write_lines('taxonomy.jsonl', [{'category': 'Bag', 'values': ['LV']}])
        self.assertRaises(InvalidTaxonomyError, load_taxonomy, path)
        path = self.write_text('broken.jsonl', '{"category": \n')
        self.assertRaises(InvalidTaxonomyError, load_taxonomy, path)
        self.assertRaises(InvalidTaxonomyError, load_taxonomy, self.path('missing.jsonl'))

    def test_lookups(self):
        source = taxonomy()
        self.assertEqual(source.values_of(BAG, 'Brand'), ['LV', 'Dior', 'Channel'])
        self.assertEqual(attribute_set(source, BODY_COVER), ['Brand', 'Condition'])
        self.assertRaises(UnknownAttributeError, source.values_of, BAG, 'Nonexistent')
        self.assertRaises(UnknownCategoryError, source.values_of, 'Shoes', 'Brand')
        self.assertRaises(UnknownCategoryError, source.attribute_set, 'Shoes')

    def test_lookups_are_copies(self):
        source = taxonomy()
        before = source.values_of(BAG, 'Brand')
        before.append('Gucci')
        self.assertEqual(source.values_of(BAG, 'Brand'), ['LV', 'Dior', 'Channel'])

    def test_attribute_order_follows_file(self):
        path = self.write_lines('taxonomy.jsonl', [
            {'category': 'Lens', 'attribute': 'Mount', 'values': ['F', 'EF']},
            {'category': 'Lens', 'attribute': 'Aperture', 'values': ['f/1.8']},
            {'category': 'Lens', 'attribute': 'Brand', 'values': ['Nikon']},
        ])
        self.assertEqual(load_taxonomy(path).attribute_set('Lens'), ['Mount', 'Aperture', 'Brand'])

    def test_interleaved_records_keep_file_order(self):
        records = [
            {'category': 'Bag', 'attribute': 'Brand', 'values': ['LV', 'Dior']},
            {'category': 'Shoe', 'attribute': 'Size', 'values': ['42', '43']},
            {'category': 'Bag', 'attribute': 'Color', 'values': ['Red']},
        ]
        source = load_taxonomy(self.write_lines('taxonomy.jsonl', records))
        self.assertEqual(source.categories, ('Bag', 'Shoe'))
        self.assertEqual(list(source.records()), records)
        path = serialize_taxonomy(source, self.path('copy.jsonl'))
        self.assertEqual(self.read_bytes('copy.jsonl'), self.read_bytes('taxonomy.jsonl'))
        self.assertEqual(load_taxonomy(path), source)

    def test_canonical_identifiers(self):
        decomposed = 'Cafe\u0301'
        source = Taxonomy([(' Bag ', 'Brand', [decomposed, 'Dior'])])
        self.assertEqual(source.categories, ('Bag',))
        self.assertTrue(source.contains('Bag', 'Brand', 'Caf\u00e9'))
        self.assertEqual(source.values_of('Bag', 'Brand')[0], 'Caf\u00e9')
        self.assertFalse(source.contains('Bag', 'Brand', 'dior'))
        self.assertEqual(canonical(None), '')

    def test_round_trip(self):
        source = taxonomy()
        path = serialize_taxonomy(source, self.path('taxonomy.jsonl'))
        self.assertEqual(load_taxonomy(path), source)
        self.assertEqual(list(load_taxonomy(path).entries()), list(source.entries()))


suite = unittest.TestLoader().loadTestsFromTestCase(test_taxonomy)
