// Typed client for the chat service. The push stream is read over fetch so
// the same code runs in browsers and in the node test runner.

import type {
  Banner,
  CommitmentRecord,
  Feed,
  GroupSummary,
  MemberRow,
  MessageView,
  NotificationRecord,
  PushEvent,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(detail);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? "ERROR", body.detail ?? "request failed");
  }
  return body as T;
}

export class ApiClient {
  constructor(public baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private async get<T>(path: string): Promise<T> {
    return parseOrThrow<T>(await this.fetchFn(this.baseUrl + path));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<T>(resp);
  }

  listGroups(): Promise<GroupSummary[]> {
    return this.get("/groups");
  }

  join(groupId: string, memberId: string, displayName = ""): Promise<SessionInfo> {
    return this.post(`/groups/${groupId}/join`, {
      member_id: memberId,
      display_name: displayName,
    });
  }

  feed(session: SessionInfo, sinceSeq = 0): Promise<Feed> {
    return this.get(
      `/groups/${session.group_id}/feed?token=${session.token}&since_seq=${sinceSeq}`,
    );
  }

  commit(session: SessionInfo, targetCycle?: number): Promise<CommitmentRecord> {
    return this.post(`/groups/${session.group_id}/commit`, {
      token: session.token,
      target_cycle: targetCycle ?? null,
    });
  }

  sendMessage(session: SessionInfo, body: string): Promise<MessageView> {
    return this.post(`/groups/${session.group_id}/messages`, {
      token: session.token,
      body,
      kind: "TEXT",
    });
  }

  sendReaction(
    session: SessionInfo,
    messageId: string,
    kind: "EMOJI" | "COMMIT_REACTION",
    emoji?: string,
  ): Promise<{ commitment: CommitmentRecord | null }> {
    return this.post(`/groups/${session.group_id}/reactions`, {
      token: session.token,
      message_id: messageId,
      kind,
      emoji: emoji ?? null,
    });
  }

  members(session: SessionInfo): Promise<MemberRow[]> {
    return this.get(`/groups/${session.group_id}/members?token=${session.token}`);
  }

  banner(session: SessionInfo): Promise<Banner> {
    return this.get(`/groups/${session.group_id}/banner?token=${session.token}`);
  }

  notifications(session: SessionInfo, sinceSeq = 0): Promise<NotificationRecord[]> {
    return this.get(
      `/groups/${session.group_id}/notifications?token=${session.token}&since_seq=${sinceSeq}`,
    );
  }

  openApp(session: SessionInfo): Promise<unknown> {
    return this.post(`/groups/${session.group_id}/open`, { token: session.token });
  }

  /** Subscribe to the SSE push stream; returns a cancel function. */
  subscribe(
    session: SessionInfo,
    onEvent: (event: PushEvent) => void,
  ): () => void {
    const controller = new AbortController();
    const url =
      `${this.baseUrl}/groups/${session.group_id}/stream?token=${session.token}`;
    void this.readStream(url, controller.signal, onEvent);
    return () => controller.abort();
  }

  private async readStream(
    url: string,
    signal: AbortSignal,
    onEvent: (event: PushEvent) => void,
  ): Promise<void> {
    try {
      const resp = await this.fetchFn(url, { signal });
      if (!resp.ok || !resp.body) return;
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { value, done } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let sep;
        while ((sep = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, sep);
          buffer = buffer.slice(sep + 2);
          for (const line of frame.split("\n")) {
            if (line.startsWith("data: ")) {
              onEvent(JSON.parse(line.slice(6)) as PushEvent);
            }
          }
        }
      }
    } catch (err) {
      if (!signal.aborted) console.warn("push stream closed", err);
    }
  }
}
