// Controller wiring the API client to the views. Commits are never
// optimistic: the obscured pane flips to the chat only after the server
// confirms the commitment and the refetched feed comes back readable.

import { ApiClient } from "./api.js";
import { initialState, type ClientViewState } from "./state.js";
import { render, type Handlers } from "./views.js";
import type { PushEvent, SessionInfo } from "./types.js";

export class GroupView {
  state: ClientViewState = initialState();
  private unsubscribe: (() => void) | null = null;

  constructor(private api: ApiClient, private root: HTMLElement) {}

  private handlers: Handlers = {
    onCommit: () => void this.commit(),
    onSend: (text) => void this.send(text),
    onReact: (messageId, kind) => void this.react(messageId, kind),
  };

  draw(): void {
    render(this.root, this.state, this.handlers);
  }

  async open(session: SessionInfo, groupName: string): Promise<void> {
    this.state.session = session;
    this.state.groupName = groupName;
    await this.api.openApp(session);
    await this.refresh();
    this.unsubscribe = this.api.subscribe(session, (event) => void this.onPush(event));
  }

  close(): void {
    this.unsubscribe?.();
    this.unsubscribe = null;
  }

  async refresh(): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    const [feed, banner, members, notifications] = await Promise.all([
      this.api.feed(session),
      this.api.banner(session),
      this.api.members(session),
      this.api.notifications(session),
    ]);
    this.state.feed = feed;
    this.state.banner = banner;
    this.state.members = members;
    this.state.notifications = notifications;
    this.draw();
  }

  async commit(): Promise<void> {
    const session = this.state.session;
    if (!session || this.state.committing) return;
    this.state.committing = true;
    this.draw();
    try {
      await this.api.commit(session); // gating stays authoritative server-side
      await this.refresh();
    } finally {
      this.state.committing = false;
      this.draw();
    }
  }

  async send(text: string): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    await this.api.sendMessage(session, text);
    await this.refresh();
  }

  async react(messageId: string, kind: "EMOJI" | "COMMIT_REACTION"): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    await this.api.sendReaction(session, messageId, kind, kind === "EMOJI" ? "👍" : undefined);
    await this.refresh();
  }

  async onPush(event: PushEvent): Promise<void> {
    switch (event.type) {
      case "banner":
        this.state.banner = event.banner;
        this.draw();
        break;
      case "message":
      case "cycle_started":
        // never trust pushed content; re-read through the gated feed
        await this.refresh();
        break;
      case "notification":
        this.state.notifications = [...this.state.notifications, event.record];
        this.draw();
        break;
      default:
        break;
    }
  }
}

// Browser bootstrap: join form, then the group view.
export function bootstrap(doc: Document, baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  const root = doc.getElementById("app");
  if (!root) return;
  const form = doc.createElement("form");
  form.innerHTML =
    '<input id="group" placeholder="group id"> <input id="member" placeholder="member id"> ' +
    '<button type="submit">Join</button>';
  root.appendChild(form);
  const viewRoot = doc.createElement("div");
  root.appendChild(viewRoot);
  const view = new GroupView(api, viewRoot);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const groupId = (doc.getElementById("group") as HTMLInputElement).value.trim();
    const memberId = (doc.getElementById("member") as HTMLInputElement).value.trim();
    if (!groupId || !memberId) return;
    void api.join(groupId, memberId).then((session) => view.open(session, groupId));
  });
}

declare const window: (Window & typeof globalThis) | undefined;
if (typeof window !== "undefined" && typeof document !== "undefined") {
  bootstrap(document, "");
}
