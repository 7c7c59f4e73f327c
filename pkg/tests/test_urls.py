from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from webtraverse.errors import MalformedReference
from webtraverse.urls import (
    ScopeRule,
    canonicalize,
    normalize_url,
    registered_domain,
    same_page,
)


def test_relative_reference_resolves():
    assert normalize_url("https://2025.aclweb.org/", "venue/") == "https://2025.aclweb.org/venue/"


def test_fragment_is_stripped():
    assert normalize_url("https://example.org/a/b", "#top") == "https://example.org/a/b"


def test_dot_segments_removed():
    assert normalize_url("https://example.org/a/", "../c?x=1") == "https://example.org/c?x=1"


def test_dot_segments_removed_in_absolute_href():
    assert normalize_url("https://x.test/", "https://example.org/a/../c") == "https://example.org/c"


def test_default_port_elided_and_empty_path_normalized():
    assert normalize_url("https://example.org:443", "") == "https://example.org/"
    assert normalize_url("http://example.org:80/x", "") == "http://example.org/x"
    assert normalize_url("http://example.org:8080/x", "") == "http://example.org:8080/x"


def test_trailing_duplicate_slashes_collapse():
    assert normalize_url("https://example.org/a///", "") == "https://example.org/a/"


def test_host_and_scheme_lowercased():
    assert normalize_url("HTTPS://Example.ORG/Path", "") == "https://example.org/Path"


def test_scheme_relative_reference():
    assert normalize_url("https://a.test/x", "//b.test/y") == "https://b.test/y"


@pytest.mark.parametrize("href", ["mailto:a@b.test", "javascript:void(0)", "tel:+123", "ftp://x/y"])
def test_unsupported_schemes_rejected(href):
    with pytest.raises(MalformedReference):
        normalize_url("https://example.org/", href)


def test_bad_port_rejected():
    with pytest.raises(MalformedReference):
        normalize_url("https://example.org/", "https://example.org:99999/")


_SEGMENT = st.text(alphabet="abcxyz019-.", min_size=0, max_size=8)


@given(st.lists(_SEGMENT, max_size=6), st.booleans(), st.sampled_from(["", "q=1", "a=b&c=d"]))
def test_normalize_is_idempotent(segments, trailing_slash, query):
    href = "/".join(segments) + ("/" if trailing_slash else "")
    if query:
        href += "?" + query
    base = "https://host.test/base/dir/"
    try:
        once = normalize_url(base, href)
    except MalformedReference:
        return
    assert normalize_url(base, once) == once
    assert canonicalize(once) == once


def test_same_page_trailing_slash():
    assert same_page("https://a.test/x/", "https://a.test/x")
    assert not same_page("https://a.test/x", "https://a.test/y")


def test_registered_domain_heuristic():
    assert registered_domain("www.cs.uni.example") == "uni.example"
    assert registered_domain("example") == "example"


def test_scope_same_host():
    scope = ScopeRule.for_root("https://a.test/root/")
    assert scope.allows("https://a.test/deep/page")
    assert not scope.allows("https://b.test/")


def test_scope_same_domain():
    scope = ScopeRule.for_root("https://www.a.test/", mode="same_domain")
    assert scope.allows("https://docs.a.test/x")
    assert not scope.allows("https://a.other/x")


def test_scope_allow_list():
    scope = ScopeRule.for_root("https://a.test/", mode="allow_list", allowed_hosts=("b.test",))
    assert scope.allows("https://a.test/x")
    assert scope.allows("https://b.test/x")
    assert not scope.allows("https://c.test/x")


def test_scope_unknown_mode_rejected():
    with pytest.raises(ValueError):
        ScopeRule.for_root("https://a.test/", mode="everything")
