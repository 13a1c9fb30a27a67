import numpy as np
import pytest

from lobwatch.book import OrderBook, Side
from lobwatch.labeler import LabelerParams, label_stream
from lobwatch.pipeline import reconstruct
from lobwatch.simgen import (
    InvalidConfig,
    Liquidity,
    SimConfig,
    Variant,
    generate,
    generate_instrument,
    read_episodes,
    write_episodes,
)


def small_config(**kw):
    base = dict(seed=11, instruments=2, session_length=20_000, episode_count=6)
    base.update(kw)
    return SimConfig(**base)


class TestConfig:
    def test_rates_must_sum_to_one(self):
        with pytest.raises(InvalidConfig):
            SimConfig(add_rate=0.5, cancel_rate=0.5, execute_rate=0.5).validate()

    def test_negative_episodes(self):
        with pytest.raises(InvalidConfig):
            SimConfig(episode_count=-1).validate()

    def test_default_profiles_alternate(self):
        cfg = SimConfig()
        assert cfg.profile(0) == Liquidity.LIQUID
        assert cfg.profile(1) == Liquidity.ILLIQUID


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        cfg = small_config()
        a_events, a_eps = generate_instrument(cfg, 0)
        b_events, b_eps = generate_instrument(cfg, 0)
        assert a_events == b_events
        assert a_eps == b_eps

    def test_different_instruments_differ(self):
        cfg = small_config()
        a, _ = generate_instrument(cfg, 0)
        b, _ = generate_instrument(cfg, 1)
        assert a != b


class TestStreamValidity:
    def test_replays_without_errors_and_monotone(self):
        cfg = small_config()
        streams, _ = generate(cfg)
        for stream in streams:
            book = OrderBook()
            last = 0
            for ev in stream:
                book.apply(ev)  # raises on any invalid event
                assert ev.timestamp >= last
                last = ev.timestamp

    def test_no_episodes_when_disabled(self):
        events, episodes = generate_instrument(small_config(episode_count=0), 0)
        assert episodes == []
        frames, _ = reconstruct(events)
        labels = label_stream(events, frames, LabelerParams())
        assert (labels == 0).mean() >= 0.99

    def test_session_length_exact(self):
        cfg = small_config()
        events, _ = generate_instrument(cfg, 0)
        assert len(events) == cfg.session_length


class TestEpisodes:
    def test_ground_truth_consistent(self):
        cfg = small_config(episode_count=8)
        events, episodes = generate_instrument(cfg, 0)
        assert len(episodes) == 8
        by_id = {}
        removal = {}
        for ev in events:
            if ev.kind.name == "ADD":
                by_id[ev.order_id] = ev.timestamp
            elif ev.kind.name in ("DELETE",):
                removal[ev.order_id] = ev.timestamp
        for ep in episodes:
            assert ep.t_start < ep.t_end
            assert ep.spoof_order_ids
            assert ep.intended_label == (1 if ep.spoof_side == Side.BID else 2)
            for oid in ep.spoof_order_ids:
                assert ep.t_start <= by_id[oid] <= ep.t_end
                assert ep.t_start <= removal[oid] <= ep.t_end

    def test_classic_episode_depth_prominence(self):
        """During an episode the spoof side's in-band depth is at least 3x its
        pre-episode rolling mean; afterwards the spoof orders are gone."""
        cfg = small_config(episode_count=6, session_length=30_000)
        events, episodes = generate_instrument(cfg, 0)
        frames, ts = reconstruct(events)
        from lobwatch.labeler import in_band_depth

        depth = in_band_depth(frames, 10)
        classics = [e for e in episodes if e.variant == Variant.CLASSIC]
        assert classics
        for ep in classics:
            i0 = int(np.searchsorted(ts, ep.t_start))
            i1 = int(np.searchsorted(ts, ep.t_end))
            pre_mean = depth[max(0, i0 - 100) : i0, ep.spoof_side].mean()
            in_episode_max = depth[i0 : i1 + 1, ep.spoof_side].max()
            assert in_episode_max >= 3 * pre_mean
            resting_after = {
                ev.order_id
                for ev in events[i1 + 1 :]
                if ev.order_id in ep.spoof_order_ids
            }
            assert not resting_after

    def test_variant_mix_respected(self):
        cfg = small_config(
            episode_count=10,
            episode_mix={Variant.TOP_OF_BOOK: 1.0},
        )
        _, episodes = generate_instrument(cfg, 0)
        assert all(e.variant == Variant.TOP_OF_BOOK for e in episodes)

    def test_interleaved_with_background(self):
        cfg = small_config(episode_count=4)
        events, episodes = generate_instrument(cfg, 0)
        for ep in episodes:
            window = [
                ev
                for ev in events
                if ep.t_start <= ev.timestamp <= ep.t_end
            ]
            outside = [ev for ev in window if ev.order_id not in ep.spoof_order_ids]
            assert outside, "episode must interleave with background flow"


class TestLiquidityMix:
    def test_liquid_vs_illiquid_depth_ratio(self):
        cfg = SimConfig(
            seed=3,
            instruments=2,
            session_length=20_000,
            episode_count=0,
            liquidity_profiles=[Liquidity.LIQUID, Liquidity.ILLIQUID],
        )

        def mean_top10_qty(iid):
            events, _ = generate_instrument(cfg, iid)
            frames, _ = reconstruct(events)
            qty = frames[5000:, :10, :, 0]  # past warmup, top 10 levels
            return qty.sum(axis=(1, 2)).mean()

        assert mean_top10_qty(0) >= 5 * mean_top10_qty(1)


class TestEpisodeIO:
    def test_jsonl_round_trip(self, tmp_path):
        _, episodes = generate_instrument(small_config(episode_count=5), 0)
        path = tmp_path / "episodes.jsonl"
        write_episodes(episodes, path)
        assert read_episodes(path) == episodes
