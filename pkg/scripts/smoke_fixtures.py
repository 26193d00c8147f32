"""Manual end-to-end check of the fixture servers and campaign executor."""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from semfuzz import campaign, codecs, fixtures, model
from semfuzz.strategies import FeedbackClass
from semfuzz.testcases import TestCase

SEEDS = pathlib.Path(__file__).resolve().parents[1] / "data" / "seeds"


def load(rel):
    return (SEEDS / rel).read_bytes()


def case(protocol, mtype, wire, expected, msg=None, cid="c-0000"):
    return TestCase(case_id=cid, strategy_id="s", protocol=protocol,
                    message_type=mtype, expected=expected, message=msg,
                    wire=wire, valid=True)


def run(protocol, cfg, c, ep_kw=None):
    with fixtures.serve(cfg) as h:
        ep = campaign.Endpoint("127.0.0.1", h.port,
                               "udp" if protocol == "DNS" else "tcp",
                               **(ep_kw or {}))
        return campaign.run_case(c, ep, campaign.CampaignConfig())


def main():
    # TLS: ClientHello with PSK moved before supported_versions
    wire = load("tls/clienthello_pre_shared_key.bin")
    msg = codecs.decode("TLS13", "ClientHello", wire)
    exts = [c for c in msg.root.children[3].children if c.name == "extensions"]
    print("psk order:", codecs.tls13.extension_names(msg))
    psk_idx = len(exts) - 1
    node = model.get(msg, f"handshake.extensions[{psk_idx}]")
    msg2 = model.remove_at(msg, f"handshake.extensions[{psk_idx}]")
    msg2 = model.insert_at(msg2, "handshake", None, node)
    # move last (psk) to position before supported_versions: easier, remove
    # supported_versions and re-append so psk is no longer last
    names = codecs.tls13.extension_names(msg)
    sv_idx = names.index("supported_versions")
    sv = model.get(msg, f"handshake.extensions[{sv_idx}]")
    bad = model.remove_at(msg, f"handshake.extensions[{sv_idx}]")
    bad = model.insert_at(bad, "handshake", None, sv)
    bad = codecs.repair_derived(bad)
    badwire = codecs.encode(bad)
    print("mutated order:", codecs.tls13.extension_names(bad))

    c = case("TLS13", "ClientHello with Pre Shared Key Extension", badwire,
             FeedbackClass.ERROR, bad)
    v = run("TLS13", fixtures.FixtureConfig("TLS13"), c)
    print("TLS control:", v.actual, v.status, v.detail)
    v = run("TLS13", fixtures.FixtureConfig(
        "TLS13", bugs=frozenset({fixtures.BUG_PSK_NOT_LAST})), c)
    print("TLS buggy:  ", v.actual, v.status, v.detail)

    # sanity: unmutated hello should be Normal on both
    good = case("TLS13", "ClientHello with Pre Shared Key Extension", wire,
                FeedbackClass.NORMAL, msg)
    v = run("TLS13", fixtures.FixtureConfig("TLS13"), good)
    print("TLS good on control:", v.actual, v.status)

    # HTTP: Content-Length with trailing space before the colon
    wire = load("http/post_form.bin")
    hmsg = codecs.decode("HTTP1", "http request with Content-Length header", wire)
    hbad = model.update_at(hmsg, "headers.Content-Length.name",
                           model.Text("Content-Length "))
    hbadwire = codecs.encode(hbad)
    print(hbadwire.split(b"\r\n\r\n")[0].decode())
    c = case("HTTP1", "http request with Content-Length header", hbadwire,
             FeedbackClass.ERROR, hbad)
    v = run("HTTP1", fixtures.FixtureConfig("HTTP1"), c)
    print("HTTP CL control:", v.actual, v.status, v.detail)
    v = run("HTTP1", fixtures.FixtureConfig(
        "HTTP1", bugs=frozenset({fixtures.BUG_CL_WHITESPACE})), c)
    print("HTTP CL buggy:  ", v.actual, v.status, v.detail)

    # HTTP: crash-sim via 8 unknown codings
    wire = load("http/get_accept_encoding.bin")
    amsg = codecs.decode("HTTP1", "http request with Accept-Encoding header", wire)
    codings = ", ".join(f"x-bogus-{i}" for i in range(8))
    abad = model.update_at(amsg, "headers.Accept-Encoding.value",
                           model.Text(" " + codings))
    abadwire = codecs.encode(abad)
    c1 = case("HTTP1", "t", abadwire, FeedbackClass.NORMAL, abad, "c-0001")
    c2 = case("HTTP1", "t", load("http/get_root.bin"), FeedbackClass.NORMAL,
              None, "c-0002")
    cfg = fixtures.FixtureConfig("HTTP1", bugs=frozenset({fixtures.BUG_AE_CRASH}))
    with fixtures.serve(cfg) as h:
        ep = campaign.Endpoint("127.0.0.1", h.port, "tcp")
        ccfg = campaign.CampaignConfig(probe=True,
                                       probe_wire=load("http/get_root.bin"),
                                       probe_protocol="HTTP1", timeout_ms=1500)
        rep = campaign.run_campaign([c1, c2], ep, ccfg)
        for v in rep.verdicts:
            print("HTTP crash-sim:", v.case_id, v.actual, v.status, v.detail)
        print("summary:", rep.summary())
    # control: same cases, no bug
    with fixtures.serve(fixtures.FixtureConfig("HTTP1")) as h:
        ep = campaign.Endpoint("127.0.0.1", h.port, "tcp")
        rep = campaign.run_campaign([c1, c2], ep, ccfg)
        for v in rep.verdicts:
            print("HTTP crash-sim control:", v.case_id, v.actual, v.status)

    # DNS cache poisoning via responder mode
    wire = load("dns/response_a_www_example.bin")
    dmsg = codecs.decode("DNS", "DNS Response", wire)
    extra = model.comp("answer",
                       model.text("name", "evil.example"),
                       model.uint("type", 1),
                       model.FieldNode("class", model.Uint(1)),
                       model.uint("ttl", 300, bits=32),
                       model.uint("rdlength", 4, derived=True),
                       model.raw("rdata", bytes([10, 6, 6, 6])))
    dbad = model.insert_at(dmsg, "", None, extra)
    dbad = codecs.repair_derived(dbad)
    dbadwire = codecs.encode(dbad)
    c = case("DNS", "DNS Response", dbadwire, FeedbackClass.ERROR, dbad)
    for bugset, label in [(frozenset(), "control"),
                          (frozenset({fixtures.BUG_DNS_EXTRA_RECORD}), "buggy")]:
        cfg = fixtures.FixtureConfig("DNS", bugs=bugset,
                                     upstream=("127.0.0.1", 53535))
        with fixtures.serve(cfg) as h:
            ep = campaign.Endpoint("127.0.0.1", h.port, "udp",
                                   mode="responder", listen_port=53535)
            v = campaign.run_case(c, ep, campaign.CampaignConfig(timeout_ms=2000))
            print(f"DNS {label}:", v.actual, v.status, v.detail)


if __name__ == "__main__":
    main()
