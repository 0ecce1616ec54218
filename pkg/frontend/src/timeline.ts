/* Pure fold of streamed run events into a session view.

   Two invariants the tests pin down:
     - items keep the exact order the server sent them, and
     - a closed stream shows exactly one terminal outcome; anything
       arriving after done or error is dropped. */

import type { ErrorEnvelope, StreamEvent } from "./types.js";

export type SessionState = "idle" | "streaming" | "done" | "error";

export interface TimelineItem {
  /** Position in the server stream, 0-based over non-delta events. */
  seq: number;
  /** 1-based loop counter; each retrieval opens the next iteration. */
  iteration: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface SessionView {
  query: string;
  runId: string | null;
  state: SessionState;
  items: TimelineItem[];
  answer: string;
  stopReason: string | null;
  error: ErrorEnvelope | null;
}

export function newSession(query: string): SessionView {
  return {
    query,
    runId: null,
    state: "idle",
    items: [],
    answer: "",
    stopReason: null,
    error: null,
  };
}

function lastIteration(view: SessionView): number {
  const last = view.items[view.items.length - 1];
  return last === undefined ? 0 : last.iteration;
}

function pushItem(view: SessionView, kind: string, payload: Record<string, unknown>, iteration: number): void {
  view.items.push({ seq: view.items.length, iteration, kind, payload });
}

/** Apply one streamed event and return the updated view (input untouched). */
export function applyEvent(view: SessionView, ev: StreamEvent): SessionView {
  if (view.state === "done" || view.state === "error") return view;
  const next: SessionView = { ...view, items: [...view.items], state: "streaming" };
  switch (ev.name) {
    case "retrieval":
      pushItem(next, ev.name, ev.data, lastIteration(view) + 1);
      break;
    case "note_update":
    case "stop":
      pushItem(next, ev.name, ev.data, Math.max(lastIteration(view), 1));
      if (ev.name === "stop") next.stopReason = String(ev.data["reason"] ?? "");
      break;
    case "generation_delta":
      next.answer = view.answer + String(ev.data["text"] ?? "");
      break;
    case "done": {
      const runId = ev.data["run_id"];
      const finalAnswer = ev.data["final_answer"];
      next.runId = typeof runId === "string" ? runId : null;
      if (typeof finalAnswer === "string") next.answer = finalAnswer;
      next.state = "done";
      break;
    }
    case "error":
      next.error = {
        code: String(ev.data["code"] ?? "unknown"),
        message: String(ev.data["message"] ?? ""),
        details: (ev.data["details"] as Record<string, unknown>) ?? {},
      };
      next.state = "error";
      break;
    default:
      // keep unknown event kinds visible rather than dropping them silently
      pushItem(next, ev.name, ev.data, Math.max(lastIteration(view), 1));
  }
  return next;
}

/** Fold a whole event sequence, e.g. when replaying a persisted trace. */
export function foldEvents(query: string, events: Iterable<StreamEvent>): SessionView {
  let view = newSession(query);
  for (const ev of events) view = applyEvent(view, ev);
  return view;
}

/** Mark a stream that dropped before its terminal event. */
export function markDisconnected(view: SessionView, message: string): SessionView {
  if (view.state === "done" || view.state === "error") return view;
  return {
    ...view,
    state: "error",
    error: { code: "stream_interrupted", message, details: {} },
  };
}
