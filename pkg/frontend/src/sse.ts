/* Incremental parser for text/event-stream bodies.

   The server frames every event as

       event: <name>\n
       data: <json>\n
       \n

   but network chunks land at arbitrary byte boundaries, so the parser
   keeps a line buffer and only emits a frame once the blank separator
   line arrives.  Multiple data lines in one frame join with newlines,
   comment lines (leading colon) are dropped, and a bare CR before the
   newline is tolerated. */

export interface SseFrame {
  event: string;
  data: string;
}

export class SseParser {
  private buffer = "";
  private eventName = "";
  private dataLines: string[] = [];

  /** Consume one decoded chunk and return every frame it completed. */
  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let cut: number;
    while ((cut = this.buffer.indexOf("\n")) >= 0) {
      let line = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      const frame = this.takeLine(line);
      if (frame !== null) frames.push(frame);
    }
    return frames;
  }

  private takeLine(line: string): SseFrame | null {
    if (line === "") {
      if (this.eventName === "" && this.dataLines.length === 0) return null;
      const frame = {
        event: this.eventName === "" ? "message" : this.eventName,
        data: this.dataLines.join("\n"),
      };
      this.eventName = "";
      this.dataLines = [];
      return frame;
    }
    if (line.startsWith(":")) return null;
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "event") {
      this.eventName = value;
    } else if (field === "data") {
      this.dataLines.push(value);
    }
    // id and retry fields are legal but unused by this console
    return null;
  }
}

/** Read a fetch response body as a stream of SSE frames. */
export async function* readEventStream(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SseFrame, void, undefined> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    while (true) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        yield frame;
      }
    }
    for (const frame of parser.push(decoder.decode())) {
      yield frame;
    }
  } finally {
    reader.releaseLock();
  }
}
