"""The dedicated third party: terminates one dialect, translates, re-signs,
relays on the other.

Flow A (SAML service provider, WS-Federation authority): the provider's
authentication request arrives on /saml/sso, leaves as a WS-Trust issue
request toward the token service, and the issued assertion comes back on
/wsfed/return to be verified, re-signed and posted to the provider's
assertion consumer endpoint. Flow B is the mirror image through
/wsfed/signin and /saml/acs.

The broker holds exactly two pieces of mutable state: the correlation
store tying the outbound leg back to the inbound one (entries expire and
are consumed at most once, atomically) and the seen-request-id set that
rejects replays. It never sees a credential; the client authenticates
against the identity provider directly.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, replace

from .bindings import (
    PostMessage,
    RedirectMessage,
    decode_saml_redirect,
    decode_saml_response_post,
    decode_wsfed_signin,
    decode_wsfed_signin_response_post,
    encode_saml_redirect,
    encode_saml_response_post,
    encode_wsfed_signin,
    encode_wsfed_signin_response_post,
)
from .config import BrokerConfig
from .errors import (
    ExpiredCorrelation,
    FedBridgeError,
    NoTrustPath,
    ProtocolError,
    Replay,
    UnknownCorrelation,
    UnknownEntity,
    UnknownIssuer,
    UnsupportedRequestType,
    UnsupportedTokenType,
)
from .httpd import (
    HttpRequest,
    HttpResponse,
    RouteHandler,
    ServerHandle,
    form_response,
    page_response,
    redirect_response,
    start_server,
)
from .messages import (
    EntityId,
    SamlAssertion,
    SamlStatus,
    WstRequestSecurityTokenResponse,
    fresh_id,
)
from .pseudonym import PseudonymRegistry
from .translate import (
    SAML2_ASSERTION_TOKEN_TYPE,
    WST_ISSUE_URI,
    AssertionTransform,
    rst_to_authn_request,
    authn_request_to_rst,
    rstr_to_saml_response,
    saml_response_to_rstr,
)
from .trust import Dialect, FederationEntity, Role, resolve_path

logger = logging.getLogger(__name__)

PERSISTENT_NAMEID_FORMAT = "urn:oasis:names:tc:SAML:2.0:nameid-format:persistent"
TRANSIENT_NAMEID_FORMAT = "urn:oasis:names:tc:SAML:2.0:nameid-format:transient"


def _fresh_correlation_id() -> str:
    return secrets.token_urlsafe(24)


@dataclass
class CorrelationEntry:
    """State tying the broker's outbound leg back to the originating one.

    ``correlation_id`` rides the outbound transport (wctx in flow A,
    RelayState in flow B); ``original_request_id`` is whatever the origin
    provider correlates on (its request ID, or its WS-Trust context);
    ``origin_relay`` is the transport token echoed back on the final POST.
    """

    correlation_id: str
    original_request_id: str
    origin_sp: EntityId
    origin_dialect: Dialect
    acs_or_return_url: str
    created: float
    ttl: float
    origin_relay: str = ""
    outbound_request_id: str = ""


class CorrelationStore:
    """Consume-once TTL store; concurrent duplicate consumes get exactly one hit."""

    def __init__(self) -> None:
        self._entries: dict[str, CorrelationEntry] = {}
        self._lock = threading.Lock()

    def put(self, entry: CorrelationEntry) -> None:
        with self._lock:
            self._entries[entry.correlation_id] = entry

    def consume(self, correlation_id: str) -> CorrelationEntry:
        with self._lock:
            entry = self._entries.pop(correlation_id, None)
        if entry is None:
            raise UnknownCorrelation(correlation_id)
        if time.time() - entry.created > entry.ttl:
            raise ExpiredCorrelation(correlation_id)
        return entry

    def __len__(self) -> int:
        return len(self._entries)


class SeenRequestIds:
    """Replay guard: a request id may be presented once per TTL window."""

    def __init__(self, ttl: float) -> None:
        self._ttl = ttl
        self._seen: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    def observe(self, issuer: EntityId, request_id: str) -> None:
        now = time.time()
        key = (issuer.value, request_id)
        with self._lock:
            self._seen = {k: t for k, t in self._seen.items() if now - t <= self._ttl}
            if key in self._seen:
                raise Replay(f"request id {request_id} already seen from {issuer}")
            self._seen[key] = now


class Broker:
    """Protocol-level broker; the HTTP surface is a thin adapter over the
    four handle_* operations so they stay directly exercisable."""

    def __init__(self, config: BrokerConfig):
        self.config = config
        self.topology = config.topology
        self.broker_id = config.broker_id
        self.signing_key = config.signing_key
        self.verify_store = config.broker_verify_store()
        self.correlations = CorrelationStore()
        self.seen_ids = SeenRequestIds(config.replay_ttl)
        self.pseudonyms = PseudonymRegistry()

    # -- helpers -------------------------------------------------------------

    def _registered_sp(self, issuer: EntityId, dialect: Dialect) -> FederationEntity:
        try:
            entity = self.topology.entity(issuer)
        except UnknownEntity:
            raise UnknownIssuer(str(issuer)) from None
        if entity.role is not Role.SERVICE_PROVIDER or entity.dialect is not dialect:
            raise UnknownIssuer(f"{issuer} is not a registered {dialect.value} service provider")
        return entity

    def _remote_ip(self, sp: FederationEntity, dialect: Dialect) -> FederationEntity:
        """The identity provider this broker bridges the given SP to."""
        candidates = []
        for ip in self.topology.by_role(Role.IDENTITY_PROVIDER):
            if ip.dialect is not dialect:
                continue
            try:
                path = resolve_path(self.topology, sp.id, ip.id)
            except (NoTrustPath, UnknownEntity):
                continue
            if len(path) == 3 and path[1] == self.broker_id:
                candidates.append(ip)
        if not candidates:
            raise NoTrustPath(f"no {dialect.value} identity provider brokered for {sp.id}")
        return candidates[0]

    def _pseudonym_transform(self, sp: EntityId, session: str) -> AssertionTransform | None:
        mode = self.config.pseudonym_modes.get(sp.value, "none")
        if mode == "none":
            return None
        secret = self.config.pseudonym_secret
        assert secret is not None  # enforced at config load

        def rewrite(assertion: SamlAssertion) -> SamlAssertion:
            if mode == "persistent":
                record = self.pseudonyms.register_persistent(assertion.subject_name, sp, secret)
                name_format = PERSISTENT_NAMEID_FORMAT
            else:
                record = self.pseudonyms.issue_transient(assertion.subject_name, sp, session)
                name_format = TRANSIENT_NAMEID_FORMAT
            return replace(
                assertion, subject_name=record.pseudonym, subject_name_format=name_format
            )

        return rewrite

    def _log_leg(self, leg: str, direction: str, correlation_id: str, outcome: str) -> None:
        logger.info(
            json.dumps(
                {
                    "leg": leg,
                    "direction": direction,
                    "correlation_id": correlation_id,
                    "outcome": outcome,
                },
                sort_keys=True,
            )
        )

    # -- flow A: SAML SP -> broker -> WS-Fed IP --------------------------------

    def handle_saml_sso(self, params: dict[str, str]) -> RedirectMessage:
        """SAML authentication request in, WS-Federation sign-in redirect out."""
        req, relay_state = decode_saml_redirect(params)
        sp = self._registered_sp(req.issuer, Dialect.SAML2)
        self.seen_ids.observe(req.issuer, req.id)

        registered_acs = sp.endpoints.get("acs", "")
        if req.acs_url and registered_acs and req.acs_url != registered_acs:
            raise ProtocolError(
                f"request ACS {req.acs_url} differs from registered endpoint"
            )
        acs_url = req.acs_url or registered_acs
        if not acs_url:
            raise ProtocolError(f"{sp.id} has no assertion consumer endpoint")

        ip = self._remote_ip(sp, Dialect.WSFED11B)
        correlation_id = _fresh_correlation_id()
        rst = authn_request_to_rst(req, self.config.ctx_map, context=correlation_id)
        # The token must come back through this broker, not go straight to
        # the origin provider; its consumer URL lives in the correlation entry.
        rst = replace(rst, reply_to=self.config.broker_entity.endpoint("wsfed_return"))

        self.correlations.put(
            CorrelationEntry(
                correlation_id=correlation_id,
                original_request_id=req.id,
                origin_sp=sp.id,
                origin_dialect=Dialect.SAML2,
                acs_or_return_url=acs_url,
                created=time.time(),
                ttl=self.config.correlation_ttl,
                origin_relay=relay_state,
            )
        )
        self._log_leg("saml_sso", "sp->broker->ip", correlation_id, "redirected")
        return encode_wsfed_signin(rst, correlation_id, ip.endpoint("signin"))

    def handle_wsfed_return(self, fields: dict[str, str]) -> PostMessage:
        """Issued token comes back; extract, re-sign, reformat, relay."""
        wctx = fields.get("wctx", "")
        if not wctx:
            raise ProtocolError("missing parameter wctx")
        entry = self.correlations.consume(wctx)
        if entry.origin_dialect is not Dialect.SAML2:
            raise ProtocolError("correlation does not belong to a SAML-origin flow")

        rstr, _ = decode_wsfed_signin_response_post(fields, require_token=True)
        if rstr.context and rstr.context != entry.correlation_id:
            raise ProtocolError("wresult context does not match correlation")

        response = rstr_to_saml_response(
            rstr,
            self.verify_store,
            self.signing_key,
            in_response_to=entry.original_request_id,
            attr_map=self.config.attr_map,
            transform=self._pseudonym_transform(entry.origin_sp, session=wctx),
        )
        self._log_leg("wsfed_return", "ip->broker->sp", wctx, "relayed")
        return encode_saml_response_post(response, entry.origin_relay, entry.acs_or_return_url)

    # -- flow B: WS-Fed SP -> broker -> SAML IdP --------------------------------

    def handle_wsfed_signin(self, params: dict[str, str]) -> RedirectMessage:
        """WS-Trust issue request in, SAML authentication redirect out."""
        rst, wctx = decode_wsfed_signin(params)
        if rst.request_type != WST_ISSUE_URI:
            raise UnsupportedRequestType(rst.request_type)
        if rst.token_type != SAML2_ASSERTION_TOKEN_TYPE:
            raise UnsupportedTokenType(rst.token_type)

        sp = self._wsfed_sp_by_reply_to(rst.reply_to)
        ip = self._remote_ip(sp, Dialect.SAML2)

        correlation_id = _fresh_correlation_id()
        outbound_request_id = fresh_id()
        saml_req = rst_to_authn_request(
            rst,
            self.config.ctx_map,
            issuer=self.broker_id,
            acs_url=self.config.broker_entity.endpoint("saml_acs"),
            destination=ip.endpoint("sso"),
            request_id=outbound_request_id,
        )

        self.correlations.put(
            CorrelationEntry(
                correlation_id=correlation_id,
                original_request_id=rst.context,
                origin_sp=sp.id,
                origin_dialect=Dialect.WSFED11B,
                acs_or_return_url=rst.reply_to,
                created=time.time(),
                ttl=self.config.correlation_ttl,
                origin_relay=wctx,
                outbound_request_id=outbound_request_id,
            )
        )
        self._log_leg("wsfed_signin", "sp->broker->ip", correlation_id, "redirected")
        return encode_saml_redirect(saml_req, correlation_id, ip.endpoint("sso"))

    def _wsfed_sp_by_reply_to(self, reply_to: str) -> FederationEntity:
        for sp in self.topology.by_role(Role.SERVICE_PROVIDER):
            if sp.dialect is Dialect.WSFED11B and sp.endpoints.get("return") == reply_to:
                return sp
        raise UnknownIssuer(f"no registered service provider replies at {reply_to}")

    def handle_saml_acs(self, fields: dict[str, str]) -> PostMessage:
        """SAML response comes back; re-sign the assertion into an RSTR."""
        response, relay_state = decode_saml_response_post(fields)
        if not relay_state:
            raise ProtocolError("missing parameter RelayState")
        entry = self.correlations.consume(relay_state)
        if entry.origin_dialect is not Dialect.WSFED11B:
            raise ProtocolError("correlation does not belong to a WS-Federation flow")
        if response.in_response_to != entry.outbound_request_id:
            raise ProtocolError("response does not answer the broker's request")

        if response.status is not SamlStatus.SUCCESS:
            # The authority refused; relay a token-less result so the origin
            # provider learns the outcome instead of timing out.
            error_result = WstRequestSecurityTokenResponse(
                context=entry.original_request_id,
                token_type=SAML2_ASSERTION_TOKEN_TYPE,
            )
            self._log_leg("saml_acs", "ip->broker->sp", relay_state,
                          f"relayed-error:{response.status.value}")
            return encode_wsfed_signin_response_post(
                error_result, entry.origin_relay, entry.acs_or_return_url
            )

        rstr = saml_response_to_rstr(
            response,
            self.verify_store,
            self.signing_key,
            context=entry.original_request_id,
            attr_map=self.config.attr_map,
            transform=self._pseudonym_transform(entry.origin_sp, session=relay_state),
        )
        self._log_leg("saml_acs", "ip->broker->sp", relay_state, "relayed")
        return encode_wsfed_signin_response_post(
            rstr, entry.origin_relay, entry.acs_or_return_url
        )

    # -- HTTP surface -----------------------------------------------------------

    def routes(self) -> dict[tuple[str, str], RouteHandler]:
        def saml_sso(request: HttpRequest) -> HttpResponse:
            return redirect_response(self._logged(self.handle_saml_sso, "saml_sso", request.query))

        def wsfed_return(request: HttpRequest) -> HttpResponse:
            return form_response(self._logged(self.handle_wsfed_return, "wsfed_return", request.form))

        def wsfed_signin(request: HttpRequest) -> HttpResponse:
            return redirect_response(self._logged(self.handle_wsfed_signin, "wsfed_signin", request.query))

        def saml_acs(request: HttpRequest) -> HttpResponse:
            return form_response(self._logged(self.handle_saml_acs, "saml_acs", request.form))

        def healthz(_: HttpRequest) -> HttpResponse:
            return page_response("ok", self.broker_id.value)

        return {
            ("GET", "/saml/sso"): saml_sso,
            ("POST", "/saml/acs"): saml_acs,
            ("GET", "/wsfed/signin"): wsfed_signin,
            ("POST", "/wsfed/return"): wsfed_return,
            ("GET", "/healthz"): healthz,
        }

    def _logged(self, handler, leg: str, params: dict[str, str]):
        correlation = params.get("wctx") or params.get("RelayState") or ""
        try:
            return handler(params)
        except FedBridgeError as exc:
            self._log_leg(leg, "error", correlation, exc.code)
            raise

    def serve(self) -> ServerHandle:
        return start_server(
            self.config.listen_host, self.config.listen_port, self.routes(), "broker"
        )
