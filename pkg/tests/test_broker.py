"""Broker handlers driven directly: correlation state, replay protection,
re-sign relay in both directions, pseudonym modes, error paths."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import replace
from urllib.parse import parse_qs, urlparse

import pytest

from fedbridge.broker import (
    Broker,
    CorrelationEntry,
    CorrelationStore,
    PERSISTENT_NAMEID_FORMAT,
    TRANSIENT_NAMEID_FORMAT,
)
from fedbridge.bindings import (
    decode_saml_response_post,
    decode_wsfed_signin,
    decode_wsfed_signin_response_post,
    encode_saml_redirect,
    encode_saml_response_post,
    encode_wsfed_signin,
    encode_wsfed_signin_response_post,
)
from fedbridge.config import config_from_dict
from fedbridge.errors import (
    ExpiredCorrelation,
    NoTrustPath,
    ProtocolError,
    Replay,
    SignatureInvalid,
    UnknownCorrelation,
    UnknownIssuer,
    UnsupportedRequestType,
)
from fedbridge.messages import (
    EntityId,
    SamlStatus,
    canonical_bytes,
    fresh_id,
    utc_now,
)
from fedbridge.mocks import MockSamlIdp, MockWsfedSts
from fedbridge.signing import KeyStore, verify
from fedbridge.trust import Dialect

from support import make_rst

SAML_SP = "https://saml-sp.example.test"
WSFED_SP = "https://wsfed-sp.example.test"
STS = "https://sts.example.test"
IDP = "https://idp.example.test"
PASSWORD_CLASS = "urn:oasis:names:tc:SAML:2.0:ac:classes:Password"


def location_params(message) -> dict[str, str]:
    query = urlparse(message.location).query
    return {k: v[0] for k, v in parse_qs(query, keep_blank_values=True).items()}


@pytest.fixture
def broker(demo_cfg) -> Broker:
    return Broker(demo_cfg)


@pytest.fixture
def sts(demo_cfg) -> MockWsfedSts:
    entity = demo_cfg.topology.entity(EntityId(STS))
    return MockWsfedSts(
        entity,
        demo_cfg.private_key_for(entity.id),
        demo_cfg.mocks.users,
        active_subject="alice",
    )


@pytest.fixture
def idp(demo_cfg) -> MockSamlIdp:
    entity = demo_cfg.topology.entity(EntityId(IDP))
    return MockSamlIdp(
        entity,
        demo_cfg.private_key_for(entity.id),
        demo_cfg.mocks.users,
        active_subject="alice",
    )


def saml_sso_params(demo_cfg, **request_overrides) -> dict[str, str]:
    """Inbound /saml/sso parameters as a registered SAML SP would send them."""
    from fedbridge.messages import SamlAuthnRequest

    sp_entity = demo_cfg.topology.entity(EntityId(SAML_SP))
    values = dict(
        id=fresh_id(),
        issue_instant=utc_now(),
        issuer=sp_entity.id,
        destination=demo_cfg.broker_entity.endpoint("saml_sso"),
        acs_url=sp_entity.endpoint("acs"),
        name_id_policy_format="urn:oasis:names:tc:SAML:1.1:nameid-format:emailAddress",
        requested_authn_context=(PASSWORD_CLASS,),
    )
    values.update(request_overrides)
    req = SamlAuthnRequest(**values)
    message = encode_saml_redirect(
        req, "origin-relay-state", demo_cfg.broker_entity.endpoint("saml_sso")
    )
    return location_params(message) | {"__request_id": req.id}


def run_flow_a(broker, demo_cfg, sts, **request_overrides):
    params = saml_sso_params(demo_cfg, **request_overrides)
    request_id = params.pop("__request_id")
    redirect = broker.handle_saml_sso(params)
    sts_post = sts.handle_signin(location_params(redirect))
    final_post = broker.handle_wsfed_return(dict(sts_post.fields))
    return request_id, redirect, sts_post, final_post


def wsfed_signin_params(demo_cfg, **rst_overrides) -> dict[str, str]:
    sp_entity = demo_cfg.topology.entity(EntityId(WSFED_SP))
    values = dict(context="sp-context-1", reply_to=sp_entity.endpoint("return"))
    values.update(rst_overrides)
    rst = make_rst(**values)
    message = encode_wsfed_signin(
        rst, "sp-context-1", demo_cfg.broker_entity.endpoint("wsfed_signin")
    )
    return location_params(message)


class TestFlowA:
    def test_redirects_to_sts_with_signin_parameters(self, broker, demo_cfg):
        redirect = broker.handle_saml_sso(
            {k: v for k, v in saml_sso_params(demo_cfg).items() if k != "__request_id"}
        )
        assert redirect.target == demo_cfg.topology.entity(EntityId(STS)).endpoint("signin")
        params = location_params(redirect)
        assert params["wa"] == "wsignin1.0"
        assert "wreq" in params and "wctx" in params
        rst, _ = decode_wsfed_signin(params)
        assert rst.request_type.endswith("/Issue")
        assert rst.reply_to == demo_cfg.broker_entity.endpoint("wsfed_return")
        assert len(broker.correlations) == 1

    def test_full_relay_resigns_without_content_change(self, broker, demo_cfg, sts):
        request_id, _, _, final_post = run_flow_a(broker, demo_cfg, sts)

        assert final_post.target == demo_cfg.topology.entity(EntityId(SAML_SP)).endpoint("acs")
        response, relay_state = decode_saml_response_post(dict(final_post.fields))
        assert relay_state == "origin-relay-state"
        assert response.in_response_to == request_id
        assert response.issuer == demo_cfg.broker_id
        assert response.status is SamlStatus.SUCCESS

        broker_store = KeyStore(
            [demo_cfg.public_keys[k] for k in demo_cfg.broker_entity.keys]
        )
        assert verify(response.assertion, broker_store) == demo_cfg.broker_id
        assert canonical_bytes(response.assertion) == canonical_bytes(sts.issued[-1])

    def test_unknown_issuer(self, broker, demo_cfg):
        params = saml_sso_params(
            demo_cfg,
            issuer=EntityId("https://stranger.example.test"),
            acs_url="https://stranger.example.test/acs",
        )
        params.pop("__request_id")
        with pytest.raises(UnknownIssuer):
            broker.handle_saml_sso(params)

    def test_replayed_request_id(self, broker, demo_cfg):
        params = saml_sso_params(demo_cfg)
        params.pop("__request_id")
        broker.handle_saml_sso(dict(params))
        with pytest.raises(Replay):
            broker.handle_saml_sso(dict(params))

    def test_acs_mismatch_rejected(self, broker, demo_cfg):
        params = saml_sso_params(demo_cfg, acs_url="https://elsewhere.example.test/acs")
        params.pop("__request_id")
        with pytest.raises(ProtocolError):
            broker.handle_saml_sso(params)

    def test_no_trust_path_without_broker_link(self, demo_cfg_dict, tmp_path):
        demo_cfg_dict["links"] = [
            pair for pair in demo_cfg_dict["links"] if STS not in pair
        ]
        cfg = config_from_dict(demo_cfg_dict, base_dir=tmp_path)
        broker = Broker(cfg)
        params = saml_sso_params(cfg)
        params.pop("__request_id")
        with pytest.raises(NoTrustPath):
            broker.handle_saml_sso(params)


class TestWsfedReturn:
    def test_unknown_correlation(self, broker):
        with pytest.raises(UnknownCorrelation):
            broker.handle_wsfed_return({"wctx": "never-issued", "wresult": "<x/>"})

    def test_missing_wctx(self, broker):
        with pytest.raises(ProtocolError):
            broker.handle_wsfed_return({"wresult": "<x/>"})

    def test_expired_correlation(self, broker, demo_cfg, sts):
        params = saml_sso_params(demo_cfg)
        params.pop("__request_id")
        redirect = broker.handle_saml_sso(params)
        wctx = location_params(redirect)["wctx"]
        entry = broker.correlations._entries[wctx]
        entry.created = time.time() - demo_cfg.correlation_ttl - 1

        sts_post = sts.handle_signin(location_params(redirect))
        with pytest.raises(ExpiredCorrelation):
            broker.handle_wsfed_return(dict(sts_post.fields))

    def test_correlation_consumed_once(self, broker, demo_cfg, sts):
        params = saml_sso_params(demo_cfg)
        params.pop("__request_id")
        redirect = broker.handle_saml_sso(params)
        sts_post = sts.handle_signin(location_params(redirect))
        broker.handle_wsfed_return(dict(sts_post.fields))
        with pytest.raises(UnknownCorrelation):
            broker.handle_wsfed_return(dict(sts_post.fields))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda a: replace(a, subject_name="mallory"),
            lambda a: replace(a, attributes=(("urn:example:attr:mail", "evil@x"),)),
            lambda a: replace(a, not_on_or_after=a.not_on_or_after.replace(year=2099)),
        ],
        ids=["subject_name", "attribute_value", "not_on_or_after"],
    )
    def test_tampered_assertion_rejected_before_any_post(self, broker, demo_cfg, sts, mutate):
        params = saml_sso_params(demo_cfg)
        params.pop("__request_id")
        redirect = broker.handle_saml_sso(params)
        sts_post = sts.handle_signin(location_params(redirect))

        fields = dict(sts_post.fields)
        rstr, wctx = decode_wsfed_signin_response_post(fields)
        tampered = replace(rstr, requested_token=mutate(rstr.requested_token))
        forged = encode_wsfed_signin_response_post(tampered, wctx, "ignored")

        with pytest.raises(SignatureInvalid):
            broker.handle_wsfed_return(dict(forged.fields))


class TestFlowB:
    def test_translates_to_saml_redirect(self, broker, demo_cfg):
        redirect = broker.handle_wsfed_signin(wsfed_signin_params(demo_cfg))
        assert redirect.target == demo_cfg.topology.entity(EntityId(IDP)).endpoint("sso")
        params = location_params(redirect)
        assert "SAMLRequest" in params and "RelayState" in params

    def test_full_relay_back_to_wsfed_sp(self, broker, demo_cfg, idp):
        redirect = broker.handle_wsfed_signin(wsfed_signin_params(demo_cfg))
        idp_post = idp.handle_sso(location_params(redirect))
        final_post = broker.handle_saml_acs(dict(idp_post.fields))

        assert final_post.target == demo_cfg.topology.entity(EntityId(WSFED_SP)).endpoint("return")
        fields = dict(final_post.fields)
        assert fields["wa"] == "wsignin1.0"
        assert fields["wctx"] == "sp-context-1"
        rstr, _ = decode_wsfed_signin_response_post(fields)
        assert rstr.context == "sp-context-1"
        broker_store = KeyStore(
            [demo_cfg.public_keys[k] for k in demo_cfg.broker_entity.keys]
        )
        assert verify(rstr.requested_token, broker_store) == demo_cfg.broker_id
        assert canonical_bytes(rstr.requested_token) == canonical_bytes(idp.issued[-1])

    def test_missing_wa(self, broker, demo_cfg):
        params = wsfed_signin_params(demo_cfg)
        params.pop("wa")
        with pytest.raises(ProtocolError):
            broker.handle_wsfed_signin(params)

    def test_renew_request_type(self, broker, demo_cfg):
        params = wsfed_signin_params(
            demo_cfg,
            request_type="http://docs.oasis-open.org/ws-sx/ws-trust/200512/Renew",
        )
        with pytest.raises(UnsupportedRequestType):
            broker.handle_wsfed_signin(params)

    def test_unknown_reply_to(self, broker, demo_cfg):
        params = wsfed_signin_params(demo_cfg, reply_to="https://stranger.example.test/return")
        with pytest.raises(UnknownIssuer):
            broker.handle_wsfed_signin(params)

    def test_in_response_to_must_match_brokers_request(self, broker, demo_cfg, idp):
        redirect = broker.handle_wsfed_signin(wsfed_signin_params(demo_cfg))
        idp_post = idp.handle_sso(location_params(redirect))
        fields = dict(idp_post.fields)
        response, relay_state = decode_saml_response_post(fields)
        forged = encode_saml_response_post(
            replace(response, in_response_to="_someone_elses"), relay_state, "ignored"
        )
        with pytest.raises(ProtocolError):
            broker.handle_saml_acs(dict(forged.fields))

    def test_replayed_relay_state(self, broker, demo_cfg, idp):
        redirect = broker.handle_wsfed_signin(wsfed_signin_params(demo_cfg))
        idp_post = idp.handle_sso(location_params(redirect))
        broker.handle_saml_acs(dict(idp_post.fields))
        with pytest.raises(UnknownCorrelation):
            broker.handle_saml_acs(dict(idp_post.fields))

    def test_non_success_relayed_as_tokenless_result(self, broker, demo_cfg):
        from fedbridge.messages import SamlResponse

        redirect = broker.handle_wsfed_signin(wsfed_signin_params(demo_cfg))
        relay_state = location_params(redirect)["RelayState"]
        entry = broker.correlations._entries[relay_state]
        refusal = SamlResponse(
            id=fresh_id(),
            in_response_to=entry.outbound_request_id,
            issuer=EntityId(IDP),
            status=SamlStatus.REQUESTER,
        )
        post = broker.handle_saml_acs(
            dict(encode_saml_response_post(refusal, relay_state, "ignored").fields)
        )
        fields = dict(post.fields)
        rstr, wctx = decode_wsfed_signin_response_post(fields, require_token=False)
        assert rstr.requested_token is None
        assert rstr.context == "sp-context-1"
        assert wctx == "sp-context-1"


class TestPseudonymModes:
    def _cfg_with_mode(self, demo_cfg_dict, tmp_path, mode):
        demo_cfg_dict["pseudonym"]["modes"] = {SAML_SP: mode}
        return config_from_dict(demo_cfg_dict, base_dir=tmp_path)

    def _subject_of(self, final_post):
        response, _ = decode_saml_response_post(dict(final_post.fields))
        return response.assertion.subject_name, response.assertion.subject_name_format

    def test_persistent_mode_rewrites_subject_stably(self, demo_cfg_dict, tmp_path, sts):
        cfg = self._cfg_with_mode(demo_cfg_dict, tmp_path, "persistent")
        broker = Broker(cfg)
        _, _, _, first = run_flow_a(broker, cfg, sts)
        _, _, _, second = run_flow_a(broker, cfg, sts)

        name1, format1 = self._subject_of(first)
        name2, format2 = self._subject_of(second)
        assert name1 == name2 != "alice"
        assert format1 == format2 == PERSISTENT_NAMEID_FORMAT
        assert broker.pseudonyms.lookup(name1).subject == "alice"

    def test_transient_mode_changes_per_session(self, demo_cfg_dict, tmp_path, sts):
        cfg = self._cfg_with_mode(demo_cfg_dict, tmp_path, "transient")
        broker = Broker(cfg)
        _, _, _, first = run_flow_a(broker, cfg, sts)
        _, _, _, second = run_flow_a(broker, cfg, sts)

        name1, format1 = self._subject_of(first)
        name2, _ = self._subject_of(second)
        assert name1 != name2
        assert format1 == TRANSIENT_NAMEID_FORMAT

    def test_default_mode_keeps_subject(self, broker, demo_cfg, sts):
        _, _, _, final_post = run_flow_a(broker, demo_cfg, sts)
        name, _ = self._subject_of(final_post)
        assert name == "alice"


class TestAttributeMapping:
    def test_claim_names_translated_on_the_way_to_the_saml_sp(
        self, demo_cfg_dict, tmp_path
    ):
        demo_cfg_dict["attribute_name_map"] = [
            ["urn:example:attr:mail", "http://schemas.example.test/claims/email"]
        ]
        # The token service speaks the claim-type vocabulary.
        demo_cfg_dict["mocks"]["users"] = [
            {
                "subject": "alice",
                "attributes": {"http://schemas.example.test/claims/email": "alice@example.test"},
            }
        ]
        cfg = config_from_dict(demo_cfg_dict, base_dir=tmp_path)
        broker = Broker(cfg)
        sts_entity = cfg.topology.entity(EntityId(STS))
        sts = MockWsfedSts(sts_entity, cfg.private_key_for(sts_entity.id), cfg.mocks.users)

        _, _, _, final_post = run_flow_a(broker, cfg, sts)
        response, _ = decode_saml_response_post(dict(final_post.fields))
        assert response.assertion.attributes == (
            ("urn:example:attr:mail", "alice@example.test"),
        )


class TestCorrelationStore:
    def test_concurrent_consume_single_winner(self):
        store = CorrelationStore()
        store.put(
            CorrelationEntry(
                correlation_id="c1",
                original_request_id="_r",
                origin_sp=EntityId("urn:sp"),
                origin_dialect=Dialect.SAML2,
                acs_or_return_url="https://sp/acs",
                created=time.time(),
                ttl=300,
            )
        )
        wins, losses = [], []
        barrier = threading.Barrier(8)

        def consume():
            barrier.wait()
            try:
                wins.append(store.consume("c1"))
            except UnknownCorrelation:
                losses.append(1)

        threads = [threading.Thread(target=consume) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(wins) == 1
        assert len(losses) == 7


class TestStructuredLog:
    def test_each_leg_logs_one_json_line(self, broker, demo_cfg, sts, caplog):
        with caplog.at_level(logging.INFO, logger="fedbridge.broker"):
            run_flow_a(broker, demo_cfg, sts)
        lines = [json.loads(r.message) for r in caplog.records if r.name == "fedbridge.broker"]
        legs = [line["leg"] for line in lines]
        assert legs == ["saml_sso", "wsfed_return"]
        assert all({"correlation_id", "direction", "outcome"} <= set(line) for line in lines)
