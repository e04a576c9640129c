"""
OTT Developer Dashboard
Streamlit page: gateway health, DID resolution, and a small execution-time
benchmark with its empirical CDF.

    streamlit run ott_dashboard.py
"""

import json
import logging

import streamlit as st

from ott_bench import OPERATIONS, empirical_cdf, run_benchmark, summarize
from ott_config import CliConfig, configure_logging
from ott_errors import OttError
from ott_ledger import HttpLedgerClient, parse_latency
from ott_method import ResolutionStatus, resolve

logger = logging.getLogger(__name__)

HEALTH_TIMEOUT = 2.0
BENCH_PROFILES = ('fixed:0', 'private', 'public')

STATUS_BOXES = {
    ResolutionStatus.VALID: st.success,
    ResolutionStatus.REVOKED: st.warning,
    ResolutionStatus.NOT_FOUND: st.info,
    ResolutionStatus.INVALID: st.error,
}


def _client(node_url: str, timeout: float) -> HttpLedgerClient:
    return HttpLedgerClient(node_url, timeout=timeout)


def render_health(node_url: str) -> None:
    client = _client(node_url, HEALTH_TIMEOUT)
    try:
        health = client.health()
        st.success(f"✓ Gateway {node_url} is {health.get('status', '?')}")
        st.metric("Records", health.get('records', 0))
    except (OttError, ValueError) as e:
        st.error(f"Gateway unreachable at {node_url}: {e}")
    finally:
        client.close()


def render_resolve(node_url: str, timeout: float) -> None:
    st.subheader("Resolve")
    did = st.text_input("DID", placeholder="did:ott:<64 hex>", key="resolve_did")
    if st.button("Resolve", key="resolve_button") and did:
        client = _client(node_url, timeout)
        try:
            with st.spinner("Fetching records..."):
                result = resolve(did.strip(), client)
        except OttError as e:
            st.error(f"{type(e).__name__}: {e}")
            return
        finally:
            client.close()

        STATUS_BOXES[result.status](f"Status: {result.status.value}")
        st.caption(f"{result.evidence.messages_scanned} message(s) scanned under the index")
        st.json(result.to_dict())


def render_bench() -> None:
    st.subheader("Benchmark (simulated ledger)")
    col1, col2, col3 = st.columns(3)
    op = col1.selectbox("Function", OPERATIONS, key="bench_op")
    n = col2.number_input("Runs", min_value=1, max_value=2000, value=50, step=10, key="bench_n")
    profile_name = col3.selectbox("Latency profile", BENCH_PROFILES, key="bench_profile")

    if st.button("Run benchmark", key="bench_button"):
        with st.spinner(f"Timing {n} {op} call(s)..."):
            runs = run_benchmark(op, int(n), parse_latency(profile_name), seed=0)
        st.session_state.bench_runs = runs
        st.session_state.bench_label = f"{op} [{profile_name}]"

    runs = st.session_state.get('bench_runs')
    if runs is None:
        return

    summary = summarize(runs, st.session_state.get('bench_label', ''))
    m1, m2, m3 = st.columns(3)
    m1.metric("Runs", summary.n)
    m2.metric("Mean (ms)", f"{summary.mean_ms:.3f}")
    m3.metric("0.95 quantile (ms)", f"{summary.q95_ms:.3f}")

    cdf = empirical_cdf(runs).set_index('t_ms')
    st.line_chart(cdf, y='F')
    st.download_button(
        "Download runs CSV",
        data=runs.to_csv(index=False),
        file_name="ott_bench_runs.csv",
        mime="text/csv",
    )


def render() -> None:
    st.set_page_config(page_title="OTT DID Method", page_icon="🔑", layout="wide")
    config = CliConfig.from_env()
    configure_logging(config.log_level)

    st.title("🔑 OTT DID Method")

    with st.sidebar:
        st.header("Gateway")
        node_url = st.text_input("Node URL", value=config.node_url, key="node_url")
        render_health(node_url)
        with st.expander("Configuration"):
            st.code(json.dumps({
                'node_url': node_url,
                'request_timeout': config.request_timeout,
                'keyring_path': config.keyring_path,
            }, indent=2), language='json')

    tab_resolve, tab_bench = st.tabs(["Resolve", "Benchmark"])
    with tab_resolve:
        render_resolve(node_url, config.request_timeout)
    with tab_bench:
        render_bench()


if __name__ == "__main__":
    render()
