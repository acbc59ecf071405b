// DOM rendering. Renders only server-confirmed state; the obscured view
// contains the group name, the committed-member count, and one commit
// button — no message content exists in the document until the feed returns
// messages.

import { bannerIsUrgent, bannerLabel, type ClientViewState } from "./state.js";
import type { MessageView } from "./types.js";

export interface Handlers {
  onCommit: () => void;
  onSend: (text: string) => void;
  onReact: (messageId: string, kind: "EMOJI" | "COMMIT_REACTION") => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, state: ClientViewState, handlers: Handlers): void {
  const doc = root.ownerDocument;
  root.textContent = "";
  root.appendChild(renderBanner(doc, state));
  if (!state.feed || state.feed.kind === "obscured") {
    root.appendChild(renderObscured(doc, state, handlers));
  } else {
    root.appendChild(renderChat(doc, state, state.feed.messages, handlers));
  }
  root.appendChild(renderMembers(doc, state));
  root.appendChild(renderNotifications(doc, state));
}

function renderBanner(doc: Document, state: ClientViewState): HTMLElement {
  const urgent = bannerIsUrgent(state.banner);
  const banner = el(doc, "div", urgent ? "banner banner--urgent" : "banner");
  banner.id = "banner";
  banner.textContent = bannerLabel(state.banner);
  return banner;
}

function renderObscured(doc: Document, state: ClientViewState, handlers: Handlers): HTMLElement {
  const pane = el(doc, "section", "obscured");
  pane.appendChild(el(doc, "h2", "obscured__name", state.groupName));
  const committed =
    state.feed?.kind === "obscured" ? state.feed.committed_member_count : 0;
  pane.appendChild(
    el(doc, "p", "obscured__count", `${committed} committed member${committed === 1 ? "" : "s"}`),
  );
  // blurred placeholder rows stand in for the hidden conversation
  const blur = el(doc, "div", "obscured__blur");
  for (let i = 0; i < 5; i++) blur.appendChild(el(doc, "div", "obscured__blur-row"));
  pane.appendChild(blur);
  pane.appendChild(
    el(doc, "p", "obscured__promise", "Commit to participating to see the conversation."),
  );
  const button = el(doc, "button", "obscured__commit", "Commit");
  button.id = "commit-button";
  button.disabled = state.committing;
  button.addEventListener("click", handlers.onCommit);
  pane.appendChild(button);
  return pane;
}

function renderChat(
  doc: Document,
  state: ClientViewState,
  messages: MessageView[],
  handlers: Handlers,
): HTMLElement {
  const pane = el(doc, "section", "chat");
  const list = el(doc, "ul", "chat__messages");
  list.id = "messages";
  for (const message of messages) {
    const item = el(doc, "li", "chat__message");
    item.dataset.messageId = message.message_id;
    item.appendChild(el(doc, "span", "chat__sender", message.sender_id));
    item.appendChild(
      el(doc, "span", "chat__body",
         message.kind === "IMAGE" ? `[image ${message.body}]` : message.body),
    );
    const like = el(doc, "button", "chat__react", "👍");
    like.addEventListener("click", () => handlers.onReact(message.message_id, "EMOJI"));
    const recommit = el(doc, "button", "chat__react chat__react--commit", "🤝 re-commit");
    recommit.addEventListener("click", () =>
      handlers.onReact(message.message_id, "COMMIT_REACTION"));
    item.appendChild(like);
    item.appendChild(recommit);
    list.appendChild(item);
  }
  pane.appendChild(list);

  const composer = el(doc, "form", "chat__composer");
  const input = el(doc, "input", "chat__input");
  input.id = "composer-input";
  input.type = "text";
  const send = el(doc, "button", "chat__send", "Send");
  send.type = "submit";
  composer.appendChild(input);
  composer.appendChild(send);
  composer.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (input.value.trim()) {
      handlers.onSend(input.value.trim());
      input.value = "";
    }
  });
  pane.appendChild(composer);
  return pane;
}

function renderMembers(doc: Document, state: ClientViewState): HTMLElement {
  const pane = el(doc, "section", "members");
  pane.appendChild(el(doc, "h3", undefined, "Members"));
  const list = el(doc, "ul", "members__list");
  list.id = "members";
  for (const row of state.members) {
    const item = el(doc, "li", "members__row");
    item.appendChild(el(doc, "span", "members__name", row.display_name));
    item.appendChild(
      el(doc, "span", "members__last",
         row.last_posted_at ? `last posted ${row.last_posted_at}` : "never posted"),
    );
    if (row.currently_committed) {
      item.appendChild(el(doc, "span", "members__committed", "committed"));
    }
    list.appendChild(item);
  }
  pane.appendChild(list);
  return pane;
}

function renderNotifications(doc: Document, state: ClientViewState): HTMLElement {
  const pane = el(doc, "section", "notifications");
  pane.appendChild(el(doc, "h3", undefined, "Notifications"));
  const list = el(doc, "ul", "notifications__list");
  list.id = "notifications";
  for (const record of state.notifications.slice(-20).reverse()) {
    list.appendChild(el(doc, "li", "notifications__row", record.payload.text));
  }
  pane.appendChild(list);
  return pane;
}
