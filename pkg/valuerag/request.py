"""
JSON request maker for remote embedding and generation endpoints
"""

import os
import json
import uuid
import threading

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from valuerag.log import Logger

JSON_MIME = 'application/json'
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_FACTOR = 0.5
DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_IN_FLIGHT = 4
RETRY_STATUS_CODES = (429, 500, 502, 503, 504)
DEFAULT_HEADERS = {
    'Accept': JSON_MIME,
    'Content-Type': JSON_MIME,
}


class JSONRequestError(Exception):
    """
    Transport or HTTP level failure talking to a remote endpoint
    """
    def __str__(self):
        return self.args[0]


class JSONResponseError(JSONRequestError):
    """
    Endpoint answered, but the body is not a JSON object
    """
    pass


def retry_policy(attempts=DEFAULT_MAX_ATTEMPTS, backoff_factor=DEFAULT_BACKOFF_FACTOR):
    """
    Bounded exponential backoff: attempts counts the first try too
    """
    return Retry(
        total=attempts - 1,
        connect=attempts - 1,
        read=attempts - 1,
        status=attempts - 1,
        backoff_factor=backoff_factor,
        status_forcelist=RETRY_STATUS_CODES,
        allowed_methods=None,
        raise_on_status=False,
    )


class JSONRequest(object):
    """
    POST JSON payloads to one endpoint and decode JSON answers

    The optional session argument replaces the requests session, which
    is how tests run without network.
    """
    def __init__(self, url, token_env=None, attempts=DEFAULT_MAX_ATTEMPTS,
                 timeout=DEFAULT_TIMEOUT, max_in_flight=DEFAULT_MAX_IN_FLIGHT,
                 stage='remote', verify=True, session=None):
        self.log = Logger('request').default_stream
        self.url = url
        self.token_env = token_env
        self.timeout = timeout
        self.stage = stage
        self.verify = verify
        self.in_flight = threading.BoundedSemaphore(max_in_flight)

        if session is None:
            session = requests.Session()
            adapter = HTTPAdapter(max_retries=retry_policy(attempts))
            session.mount('http://', adapter)
            session.mount('https://', adapter)
        self.session = session

    def __repr__(self):
        return '%s %s' % (self.stage, self.url)

    def __prepare_headers__(self, correlation_id, extra_headers):
        headers = DEFAULT_HEADERS.copy()
        headers['X-Request-Id'] = correlation_id
        if self.token_env:
            token = os.environ.get(self.token_env)
            if token:
                headers['Authorization'] = 'Bearer %s' % token
        headers.update(extra_headers)
        return headers

    def post(self, payload, headers=None):
        """
        Send payload and return the decoded JSON object
        """
        correlation_id = uuid.uuid4().hex
        headers = self.__prepare_headers__(correlation_id, headers or {})
        self.log.debug('%s request %s to %s' % (self.stage, correlation_id, self.url))

        with self.in_flight:
            try:
                res = self.session.post(
                    self.url,
                    data=json.dumps(payload),
                    headers=headers,
                    timeout=self.timeout,
                    verify=self.verify,
                )
            except requests.exceptions.RequestException as emsg:
                self.log.info('%s request %s failed: %s' % (self.stage, correlation_id, emsg))
                raise JSONRequestError('%s endpoint %s: %s' % (self.stage, self.url, emsg))

        if res.status_code >= 400:
            self.log.info('%s request %s returned HTTP %s' % (self.stage, correlation_id, res.status_code))
            raise JSONRequestError('%s endpoint %s returned HTTP %s %s' % (
                self.stage, self.url, res.status_code, res.reason or ''
            ))

        try:
            data = res.json()
        except ValueError as emsg:
            raise JSONResponseError('%s endpoint %s returned invalid JSON: %s' % (self.stage, self.url, emsg))
        if not isinstance(data, dict):
            raise JSONResponseError('%s endpoint %s returned %s instead of an object' % (
                self.stage, self.url, type(data).__name__
            ))

        self.log.debug('%s response %s received' % (self.stage, correlation_id))
        return data
