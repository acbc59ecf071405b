// Client view state: exactly what the server last confirmed, nothing more.
// Gated content is never reconstructed from push events; a push only tells
// the client to refetch through the gated feed endpoint.

import type { Banner, Feed, MemberRow, NotificationRecord, SessionInfo } from "./types.js";

export interface ClientViewState {
  session: SessionInfo | null;
  groupName: string;
  feed: Feed | null;
  banner: Banner | null;
  members: MemberRow[];
  notifications: NotificationRecord[];
  committing: boolean; // commit round trip in flight; button disabled
}

export function initialState(): ClientViewState {
  return {
    session: null,
    groupName: "",
    feed: null,
    banner: null,
    members: [],
    notifications: [],
    committing: false,
  };
}

export function bannerIsUrgent(banner: Banner | null): boolean {
  return banner?.kind === "COMMITTED_UNFULFILLED_URGENT";
}

export function bannerLabel(banner: Banner | null): string {
  if (!banner) return "";
  switch (banner.kind) {
    case "NOT_COMMITTED":
      return "You are not committed for this cycle. Commit to see the group.";
    case "COMMITTED_UNFULFILLED":
      return "Committed for this cycle. You haven't posted yet.";
    case "COMMITTED_UNFULFILLED_URGENT":
      return "The cycle is close to ending and you haven't posted yet!";
    case "COMMITTED_FULFILLED_NO_RENEWAL":
      return "Commitment fulfilled. Commit ahead to keep your streak.";
    case "COMMITTED_FULFILLED_RENEWED":
      return "Commitment fulfilled and renewed for the next cycle.";
    case "CONTROL_DAYS_SINCE_POST": {
      const days = banner.days_since_post ?? 0;
      return days === 0
        ? "Welcome back!"
        : `It has been ${days} day${days === 1 ? "" : "s"} since you last posted.`;
    }
  }
}
