import pytest

from contextdial.acts import DialogAct
from contextdial.state import (append_system_turn, fulfilled_requests, init_state,
                               record_booking, update)


class TestInitState:
    def test_attraction_semi_slots(self, schema):
        state = init_state(schema)
        semi = state.semi("attraction")
        assert set(semi) == {"type", "name", "area", "entrance fee"}
        assert all(v == "" for v in semi.values())

    def test_book_has_empty_booked_list(self, schema):
        state = init_state(schema)
        assert state.book("hotel")["booked"] == []
        assert state.book("hotel")["people"] == ""

    def test_two_inits_equal(self, schema):
        assert init_state(schema) == init_state(schema)


class TestUpdate:
    def test_inform_writes_semi_and_user_action(self, schema):
        state = init_state(schema)
        acts = [DialogAct("Attraction", "Inform", "Type", "college")]
        new = update(state, acts, "i am looking for a college type attraction .", schema)
        assert new.semi("attraction")["type"] == "college"
        assert new.user_action == {"Attraction-Inform": [["Type", "college"]]}
        assert new.history[-1][0] == "user"

    def test_empty_acts_only_history_grows(self, schema):
        state = init_state(schema)
        new = update(state, [], "hello", schema)
        assert new.belief_state == state.belief_state
        assert len(new.history) == 1

    def test_latest_inform_wins(self, schema):
        state = init_state(schema)
        s1 = update(state, [DialogAct("Hotel", "Inform", "Price", "cheap")], "a", schema)
        s2 = update(s1, [DialogAct("Hotel", "Inform", "Price", "moderate")], "b", schema)
        assert s2.semi("hotel")["pricerange"] == "moderate"

    def test_booking_slots_route_to_book(self, schema):
        state = init_state(schema)
        new = update(state, [DialogAct("Hotel", "Inform", "Stay", "3")], "x", schema)
        assert new.book("hotel")["stay"] == "3"
        assert "stay" not in new.semi("hotel")

    def test_request_accumulates(self, schema):
        state = init_state(schema)
        new = update(state, [DialogAct("Attraction", "Request", "Addr", "?")], "x", schema)
        assert "address" in new.request_state["attraction"]

    def test_unknown_domain_dropped_not_fatal(self, schema):
        state = init_state(schema)
        new = update(state, [DialogAct("Spaceport", "Inform", "Pad", "39a")], "x", schema)
        assert "spaceport" not in new.belief_state

    def test_purity(self, schema):
        state = init_state(schema)
        acts = [DialogAct("Hotel", "Inform", "Area", "north")]
        a = update(state, acts, "u", schema)
        b = update(state, acts, "u", schema)
        assert a == b
        assert state.semi("hotel")["area"] == ""  # input untouched

    def test_schema_keys_never_grow(self, schema):
        state = init_state(schema)
        new = update(state, [DialogAct("Hotel", "Inform", "Food", "tapas")], "x", schema)
        assert set(new.semi("hotel")) == set(state.semi("hotel"))


class TestFulfilledRequests:
    def test_answered_request_drains(self, schema):
        state = init_state(schema)
        state = update(state, [DialogAct("Attraction", "Request", "Addr", "?")], "x", schema)
        answered = fulfilled_requests(
            state, {"Attraction-Inform": [["Addr", "98 king street"]]}, schema)
        assert answered.request_state == {}

    def test_unanswered_request_persists(self, schema):
        state = init_state(schema)
        state = update(state, [DialogAct("Attraction", "Request", "Addr", "?")], "x", schema)
        after = fulfilled_requests(state, {"Attraction-Inform": [["Fee", "free"]]}, schema)
        assert "address" in after.request_state["attraction"]

    def test_answer_without_request_is_noop(self, schema):
        state = init_state(schema)
        after = fulfilled_requests(state, {"Hotel-Inform": [["Addr", "somewhere"]]}, schema)
        assert after.request_state == state.request_state


class TestHelpers:
    def test_record_booking(self, schema):
        state = init_state(schema)
        after = record_booking(state, "hotel", "ABC12345", "a and b guest house")
        assert after.book("hotel")["booked"] == [
            {"reference": "ABC12345", "name": "a and b guest house"}]

    def test_history_alternation(self, schema):
        state = init_state(schema)
        state = update(state, [], "hi", schema)
        state = append_system_turn(state, "hello , how can i help you ?")
        assert [h[0] for h in state.history] == ["user", "sys"]
