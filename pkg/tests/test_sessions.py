import json

import numpy as np
import pytest

from moodradio.ann import query
from moodradio.catalog import Mood
from moodradio.forests import MoodScoreTable
from moodradio.sessions import (
    FallbackError,
    FallbackPool,
    FeedbackError,
    FeedbackEvent,
    SessionConfig,
    SessionDeps,
    SessionError,
    SessionExhausted,
    SessionState,
    apply_feedback,
    build_fallback_pool,
    candidate_pool,
    next_track,
    start_session,
    state_from_dict,
    state_to_dict,
)

from conftest import make_session_deps


def mood_index(mood):
    return list(Mood).index(mood)


def score_of(i, mood):
    """The fixture's score pattern: song i scores ((i + m) % 10) / 10."""
    return ((i + mood_index(mood)) % 10) / 10.0


def song_no(song_id):
    return int(song_id[1:])


class TestSessionConfig:
    def test_defaults_valid(self):
        SessionConfig().validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"threshold": 0.0},
            {"threshold": 1.0},
            {"mood_thresholds": {"party": 1.5}},
            {"favorites_ratio": 1.1},
            {"artist_spacing": 0},
            {"like_boost": 1.0},
            {"skip_penalty": 0.0},
            {"skip_penalty": 1.0},
            {"no_repeat_window": 0},
            {"queue_batch": 0},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(SessionError):
            SessionConfig(**kwargs).validate()

    def test_per_mood_threshold_override(self):
        config = SessionConfig(threshold=0.5, mood_thresholds={Mood.PARTY.id: 0.8})
        assert config.threshold_for(Mood.PARTY) == 0.8
        assert config.threshold_for(Mood.CHILL) == 0.5


class TestFallbackPool:
    def test_round_trip(self):
        pool = FallbackPool({Mood.PARTY: ["s1", "s2"], Mood.CHILL: ["s3"]})
        again = FallbackPool.from_dict(pool.to_dict())
        assert again.for_mood(Mood.PARTY) == ("s1", "s2")
        assert again.for_mood(Mood.CHILL) == ("s3",)
        assert again.for_mood(Mood.FOCUS) == ()
        assert len(again) == 3
        assert set(again.moods) == {Mood.PARTY, Mood.CHILL}


class TestBuildFallbackPool:
    def test_popularity_order_and_threshold(self, session_deps):
        pool = build_fallback_pool(
            Mood.PARTY, session_deps.score_table, {s: float(song_no(s)) for s in session_deps.catalog.songs},
            size=20, threshold=0.5,
        )
        assert len(pool) == 20
        for song_id in pool:
            assert score_of(song_no(song_id), Mood.PARTY) >= 0.5
        pops = [song_no(s) for s in pool]
        assert pops == sorted(pops, reverse=True)  # most popular first

    def test_ties_break_by_song_id(self):
        table = MoodScoreTable()
        for s in ("sZ", "sA", "sM"):
            table.set(s, Mood.CHILL, 0.9)
        pool = build_fallback_pool(Mood.CHILL, table, {}, size=3, threshold=0.5)
        assert pool == ["sA", "sM", "sZ"]

    def test_unreachable_threshold_names_mood(self, session_deps):
        with pytest.raises(FallbackError, match="Party"):
            build_fallback_pool(Mood.PARTY, session_deps.score_table, {}, threshold=0.99)


class TestCandidatePool:
    def test_threshold_filters_scores(self, session_deps):
        pool = candidate_pool("u_main", Mood.PARTY, session_deps)
        assert pool
        for song_id, _ in pool:
            assert score_of(song_no(song_id), Mood.PARTY) >= 0.5
        # the complement really was dropped: every ANN neighbor below the
        # threshold is absent from the pool
        neighbors = query(
            session_deps.index,
            session_deps.space.user_vector("u_main"),
            k=session_deps.config.candidate_k,
        )
        kept = {s for s, _ in pool}
        for song_id, _ in neighbors:
            if score_of(song_no(song_id), Mood.PARTY) < 0.5:
                assert song_id not in kept

    def test_affinity_order_preserved(self, session_deps):
        neighbors = query(
            session_deps.index,
            session_deps.space.user_vector("u_main"),
            k=session_deps.config.candidate_k,
        )
        rank = {s: i for i, (s, _) in enumerate(neighbors)}
        pool = candidate_pool("u_main", Mood.CHILL, session_deps)
        ranks = [rank[s] for s, _ in pool]
        assert ranks == sorted(ranks)

    def test_null_mood_skips_score_filter(self, session_deps):
        pool = candidate_pool("u_main", None, session_deps)
        assert len(pool) == 48  # nothing filtered: whole catalog qualifies

    def test_history_and_exclusions_respected(self, session_deps):
        full = candidate_pool("u_main", None, session_deps)
        history = {full[0][0], full[3][0]}
        pool = candidate_pool("u_main", None, session_deps, history=history,
                              excluded_artists={"a0"}, barred_songs={full[1][0]})
        kept = {s for s, _ in pool}
        assert not (kept & history)
        assert full[1][0] not in kept
        for song_id in kept:
            assert session_deps.catalog.songs[song_id].artist_id != "a0"

    def test_vectorless_user_rejected(self, session_deps):
        with pytest.raises(SessionError, match="u_novec"):
            candidate_pool("u_novec", Mood.PARTY, session_deps)


class TestStartSession:
    def test_unknown_user(self, session_deps):
        with pytest.raises(SessionError, match="unknown user"):
            start_session("ghost", Mood.PARTY, session_deps)

    def test_ineligible_user(self, session_deps):
        with pytest.raises(SessionError, match="too few favorites"):
            start_session("u_poor", Mood.PARTY, session_deps)

    def test_happy_path_personalized(self, session_deps):
        session = start_session("u_main", Mood.PARTY, session_deps, seed=3)
        assert not session.fallback_active
        assert session.mood is Mood.PARTY
        assert session.threshold == 0.5
        assert len(session.queue) == session_deps.config.queue_batch
        assert not session.history

    def test_queue_mixes_favorites_with_discoveries(self, session_deps):
        session = start_session("u_main", Mood.PARTY, session_deps, seed=3)
        favorites = session_deps.catalog.users["u_main"].favorite_song_ids
        queued_favs = [s for s, _ in session.queue if s in favorites]
        # round(10 * 0.3) = 3 favorite slots in the first batch
        assert len(queued_favs) == 3

    def test_vectorless_user_falls_back(self, session_deps):
        session = start_session("u_novec", Mood.PARTY, session_deps, seed=0)
        assert session.fallback_active
        pool = session_deps.fallback.for_mood(Mood.PARTY)
        assert session.queued_songs <= set(pool)

    def test_high_threshold_triggers_fallback(self):
        deps = make_session_deps(SessionConfig(
            candidate_k=48, min_candidates=5, queue_batch=10,
            mood_thresholds={Mood.PARTY.id: 0.95},
        ))
        session = start_session("u_main", Mood.PARTY, deps, seed=0)
        assert session.threshold == 0.95
        assert session.fallback_active  # no song scores above 0.9

    def test_session_id_stable_per_seed(self, session_deps):
        a = start_session("u_main", Mood.PARTY, session_deps, seed=5)
        b = start_session("u_main", Mood.PARTY, session_deps, seed=5)
        c = start_session("u_main", Mood.PARTY, session_deps, seed=6)
        assert a.session_id == b.session_id
        assert a.session_id != c.session_id

    def test_explicit_session_id_wins(self, session_deps):
        session = start_session("u_main", None, session_deps, session_id="custom")
        assert session.session_id == "custom"

    def test_empty_world_raises_fallback_error(self, session_deps):
        deps = SessionDeps(
            catalog=session_deps.catalog,
            space=None,
            index=None,
            score_table=session_deps.score_table,
            fallback=FallbackPool(),
            config=session_deps.config,
        )
        with pytest.raises(FallbackError, match="empty fallback pool"):
            start_session("u_main", Mood.PARTY, deps, seed=0)


def pop_deps():
    """Deps whose queue only refills when empty, so hand queues stay intact."""
    return make_session_deps(SessionConfig(
        candidate_k=48, min_candidates=5, queue_batch=10, refill_below=1,
    ))


def bare_session(queue, history=(), weights=None, mood=None):
    """Hand-assembled state for next_track unit checks."""
    return SessionState(
        session_id="t", user_id="u_main", mood=mood, threshold=0.5, rng_seed=0,
        queue=list(queue), history=list(history),
        artist_weights=dict(weights or {}),
        rng=np.random.Generator(np.random.PCG64(0)),
    )


class TestNextTrack:
    def test_artist_spacing_prefers_fresh_artist(self):
        deps = pop_deps()
        # s00 and s06 belong to a0, s01 to a1; a0 just played
        session = bare_session(
            queue=[("s00", 1.0), ("s06", 1.0), ("s01", 1.0)],
            history=["s12"],  # artist a0
        )
        assert next_track(session, deps) == "s01"

    def test_spacing_waived_when_all_collide(self):
        deps = pop_deps()
        session = bare_session(
            queue=[("s00", 1.0), ("s06", 1.0)],
            history=["s12"],  # a0 again; both queued songs are a0
        )
        assert next_track(session, deps) == "s00"  # earliest queue slot

    def test_priority_is_base_times_artist_weight(self):
        deps = pop_deps()
        session = bare_session(
            queue=[("s00", 1.0), ("s01", 1.0)],
            weights={"a1": 3.0},
        )
        assert next_track(session, deps) == "s01"

    def test_higher_base_wins_among_spaced(self):
        deps = pop_deps()
        session = bare_session(queue=[("s02", 0.4), ("s03", 0.9), ("s04", 0.6)])
        assert next_track(session, deps) == "s03"

    def test_play_is_recorded(self):
        deps = pop_deps()
        session = bare_session(queue=[("s05", 1.0), ("s07", 0.5)])
        played = next_track(session, deps)
        assert played == "s05"
        assert session.history == [played]
        assert session.last_played[played] == 0
        assert played not in session.queued_songs

    def test_mood_session_exhausts_without_recycling(self, session_deps):
        # default window 100 can never re-admit anything here: fewer than 100
        # songs qualify for the mood, so the session must end
        session = start_session("u_main", Mood.PARTY, session_deps, seed=1)
        played = []
        with pytest.raises(SessionExhausted):
            for _ in range(200):
                played.append(next_track(session, session_deps))
        assert len(played) == len(set(played))  # no repeats before exhaustion
        qualifying = {s for s in session_deps.catalog.songs if score_of(song_no(s), Mood.PARTY) >= 0.5}
        assert set(played) == qualifying

    def test_recycling_sustains_session_with_short_window(self):
        deps = make_session_deps(SessionConfig(
            candidate_k=48, min_candidates=5, queue_batch=10, no_repeat_window=10,
        ))
        session = start_session("u_main", Mood.PARTY, deps, seed=1)
        last_seen: dict[str, int] = {}
        for pos in range(120):
            song = next_track(session, deps)
            if song in last_seen:
                assert pos - last_seen[song] >= 10
            last_seen[song] = pos

    def test_vectorless_session_draws_only_from_pool(self, session_deps):
        pool = set(session_deps.fallback.for_mood(Mood.PARTY))
        session = start_session("u_novec", Mood.PARTY, session_deps, seed=0)
        played = []
        with pytest.raises(SessionExhausted):
            for _ in range(len(pool) + 1):
                played.append(next_track(session, session_deps))
        assert set(played) == pool
        assert len(played) == len(pool)


class TestApplyFeedback:
    def play_some(self, deps, n=5, mood=Mood.PARTY, seed=2):
        session = start_session("u_main", mood, deps, seed=seed)
        played = [next_track(session, deps) for _ in range(n)]
        return session, played

    def test_like_boosts_artist_weight(self, session_deps):
        session, played = self.play_some(session_deps)
        artist = session_deps.catalog.songs[played[0]].artist_id
        apply_feedback(session, FeedbackEvent("like", played[0]), session_deps)
        assert session.artist_weight(artist) == 1.5
        apply_feedback(session, FeedbackEvent("like", played[0]), session_deps)
        assert session.artist_weight(artist) == 2.25

    def test_skip_penalizes_and_bars(self, session_deps):
        session, played = self.play_some(session_deps)
        artist = session_deps.catalog.songs[played[1]].artist_id
        apply_feedback(session, FeedbackEvent("skip", played[1]), session_deps)
        assert session.artist_weight(artist) == 0.5
        assert played[1] in session.barred_songs
        assert artist not in session.excluded_artists
        # only the one song is barred: the artist keeps playing eventually
        later = []
        while True:
            try:
                later.append(next_track(session, session_deps))
            except SessionExhausted:
                break
        assert played[1] not in later
        assert any(session_deps.catalog.songs[s].artist_id == artist for s in later)

    def test_weights_stay_positive(self, session_deps):
        session, played = self.play_some(session_deps)
        artist = session_deps.catalog.songs[played[0]].artist_id
        for _ in range(50):
            apply_feedback(session, FeedbackEvent("skip", played[0]), session_deps)
        assert session.artist_weight(artist) > 0.0

    def test_exclude_artist_purges_queue(self, session_deps):
        session, played = self.play_some(session_deps)
        artist = session_deps.catalog.songs[played[2]].artist_id
        assert any(session_deps.catalog.songs[s].artist_id == artist for s in session.queued_songs)
        apply_feedback(session, FeedbackEvent("exclude_artist", played[2]), session_deps)
        assert artist in session.excluded_artists
        for song_id in session.queued_songs:
            assert session_deps.catalog.songs[song_id].artist_id != artist

    def test_exclude_artist_blocks_future_refills(self, session_deps):
        session, played = self.play_some(session_deps)
        artist = session_deps.catalog.songs[played[2]].artist_id
        apply_feedback(session, FeedbackEvent("exclude_artist", played[2]), session_deps)
        while True:
            try:
                song = next_track(session, session_deps)
            except SessionExhausted:
                break
            assert session_deps.catalog.songs[song].artist_id != artist

    def test_exclude_song(self, session_deps):
        session, played = self.play_some(session_deps)
        apply_feedback(session, FeedbackEvent("exclude_song", played[3]), session_deps)
        assert played[3] in session.excluded_songs
        assert played[3] not in session.queued_songs

    def test_feedback_requires_a_played_song(self, session_deps):
        session, _ = self.play_some(session_deps)
        unplayed = next(iter(session.queued_songs))
        with pytest.raises(FeedbackError, match="never played"):
            apply_feedback(session, FeedbackEvent("like", unplayed), session_deps)

    def test_unknown_kind_rejected(self, session_deps):
        session, played = self.play_some(session_deps)
        with pytest.raises(FeedbackError, match="unknown feedback kind"):
            apply_feedback(session, FeedbackEvent("adore", played[0]), session_deps)


def run_scripted(deps, seed, mood=Mood.PARTY, n=18):
    """Fixed op schedule: pops with interleaved feedback, returns the history."""
    session = start_session("u_main", mood, deps, seed=seed)
    for i in range(n):
        song = next_track(session, deps)
        if i == 4:
            apply_feedback(session, FeedbackEvent("like", song), deps)
        elif i == 9:
            apply_feedback(session, FeedbackEvent("skip", song), deps)
        elif i == 13:
            apply_feedback(session, FeedbackEvent("exclude_artist", song), deps)
    return session


class TestDeterminism:
    def test_same_seed_same_story(self, session_deps):
        a = run_scripted(session_deps, seed=11)
        b = run_scripted(make_session_deps(), seed=11)
        assert a.history == b.history
        assert a.artist_weights == b.artist_weights
        assert a.queue == b.queue

    def test_different_seed_changes_identity_and_can_change_mix(self, session_deps):
        a = run_scripted(session_deps, seed=11)
        b = run_scripted(session_deps, seed=12)
        assert a.session_id != b.session_id
        # pop order is priority-driven, so a personalized pair may coincide;
        # the rng visibly reshuffles the regular-mode fallback mix instead
        def novec_story(seed):
            session = start_session("u_novec", None, session_deps, seed=seed)
            return tuple(next_track(session, session_deps) for _ in range(12))

        base = novec_story(0)
        assert any(novec_story(s) != base for s in range(1, 6))

    def test_snapshot_resume_matches_uninterrupted_run(self, session_deps):
        straight = start_session("u_main", Mood.PARTY, session_deps, seed=4)
        resumed = start_session("u_main", Mood.PARTY, make_session_deps(), seed=4)
        for _ in range(6):
            next_track(straight, session_deps)
            next_track(resumed, make_session_deps())

        # round-trip through JSON mid-session
        blob = json.dumps(state_to_dict(resumed), sort_keys=True)
        resumed = state_from_dict(json.loads(blob))

        deps = make_session_deps()
        tail_a = [next_track(straight, session_deps) for _ in range(10)]
        tail_b = [next_track(resumed, deps) for _ in range(10)]
        assert tail_a == tail_b

    def test_state_version_checked(self, session_deps):
        session = start_session("u_main", Mood.PARTY, session_deps, seed=0)
        d = state_to_dict(session)
        d["version"] = 99
        with pytest.raises(SessionError, match="version"):
            state_from_dict(d)

    def test_state_dict_is_json_safe(self, session_deps):
        session = run_scripted(session_deps, seed=7)
        blob = json.dumps(state_to_dict(session), sort_keys=True)
        again = state_from_dict(json.loads(blob))
        assert again.history == session.history
        assert again.queue == session.queue
        assert again.excluded_artists == session.excluded_artists


class TestRegularFlowDegeneracy:
    def test_null_mood_sequence_ignores_score_table(self):
        deps_a = make_session_deps()
        deps_b = make_session_deps()
        # same world, radically different scores (and no rebuilt pools: the
        # prebuilt pool artifact is part of the world, scores are not)
        shuffled = MoodScoreTable(model_version="vother")
        for i, song_id in enumerate(sorted(deps_b.catalog.songs)):
            for m, mood in enumerate(Mood):
                shuffled.set(song_id, mood, ((i * 3 + m * 7) % 10) / 10.0)
        deps_b.score_table = shuffled

        a = run_scripted(deps_a, seed=9, mood=None, n=30)
        b = run_scripted(deps_b, seed=9, mood=None, n=30)
        assert a.history == b.history

    def test_mood_sessions_do_read_the_table(self):
        deps = make_session_deps()
        session = start_session("u_main", Mood.PARTY, deps, seed=9)
        for _ in range(10):
            song = next_track(session, deps)
            assert score_of(song_no(song), Mood.PARTY) >= 0.5


class TestMoodPurity:
    def test_every_track_passes_threshold_even_in_fallback(self, session_deps):
        for user in ("u_main", "u_novec"):
            session = start_session(user, Mood.FOCUS, session_deps, seed=13)
            for _ in range(15):
                try:
                    song = next_track(session, session_deps)
                except SessionExhausted:
                    break
                assert score_of(song_no(song), Mood.FOCUS) >= session.threshold
