"""
Test JSON requests against fake sessions
"""

import os
import unittest

import requests

from valuerag.request import JSONRequest, JSONRequestError, JSONResponseError, retry_policy

from test.fixtures import FakeResponse, FakeSession

URL = 'https://embeddings.example.com/v1/embeddings'


class test_request(unittest.TestCase):
    def tearDown(self):
        os.environ.pop('VALUERAG_TEST_TOKEN', None)

    def test_retry_policy(self):
        policy = retry_policy(3)
        self.assertEqual(policy.total, 2)
        self.assertIn(503, policy.status_forcelist)
        self.assertIn(429, policy.status_forcelist)
        self.assertFalse(policy.raise_on_status)

    def test_default_session_retries(self):
        request = JSONRequest(URL, attempts=3)
        adapter = request.session.get_adapter(URL)
        self.assertEqual(adapter.max_retries.total, 2)

    def test_post(self):
        os.environ['VALUERAG_TEST_TOKEN'] = 'secret'
        session = FakeSession([FakeResponse({'ok': True}), FakeResponse({'ok': False})])
        request = JSONRequest(URL, token_env='VALUERAG_TEST_TOKEN', stage='embedding', session=session)
        self.assertEqual(request.post({'input': ['a']}), {'ok': True})
        request.post({'input': ['b']})

        url, payload, headers = session.calls[0]
        self.assertEqual(url, URL)
        self.assertEqual(payload, {'input': ['a']})
        self.assertEqual(headers['Authorization'], 'Bearer secret')
        self.assertEqual(headers['Content-Type'], 'application/json')
        self.assertNotEqual(headers['X-Request-Id'], session.calls[1][2]['X-Request-Id'])

    def test_missing_token_sends_no_authorization(self):
        session = FakeSession([FakeResponse({})])
        JSONRequest(URL, token_env='VALUERAG_TEST_TOKEN', session=session).post({})
        self.assertNotIn('Authorization', session.calls[0][2])

    def test_http_error(self):
        session = FakeSession([FakeResponse({}, status_code=503, reason='Service Unavailable')])
        request = JSONRequest(URL, stage='generation', session=session)
        with self.assertRaises(JSONRequestError) as context:
            request.post({})
        self.assertIn('generation', str(context.exception))
        self.assertIn(URL, str(context.exception))
        self.assertIn('503', str(context.exception))

    def test_transport_error(self):
        session = FakeSession([requests.exceptions.ConnectionError('connection refused')])
        with self.assertRaises(JSONRequestError) as context:
            JSONRequest(URL, stage='embedding', session=session).post({})
        self.assertIn('connection refused', str(context.exception))

    def test_invalid_body(self):
        request = JSONRequest(URL, session=FakeSession([
            FakeResponse(text='<html>'),
            FakeResponse([1, 2]),
        ]))
        self.assertRaises(JSONResponseError, request.post, {})
        self.assertRaises(JSONResponseError, request.post, {})


suite = unittest.TestLoader().loadTestsFromTestCase(test_request)
