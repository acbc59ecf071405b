// Wire types for the group-chat protocol (see ../protocol.md).

export interface SessionInfo {
  token: string;
  group_id: string;
  member_id: string;
}

export interface GroupSummary {
  group_id: string;
  name: string;
  condition: "COMMIT" | "CONTROL";
  cycle_seconds: number;
  member_count: number;
}

export interface MessageView {
  message_id: string;
  sender_id: string;
  sent_at: string;
  kind: "TEXT" | "IMAGE";
  body: string;
  seq: number;
}

export interface MessagesFeed {
  kind: "messages";
  messages: MessageView[];
  last_seq: number;
}

export interface ObscuredFeed {
  kind: "obscured";
  group_name: string;
  committed_member_count: number;
}

export type Feed = MessagesFeed | ObscuredFeed;

export type BannerKind =
  | "NOT_COMMITTED"
  | "COMMITTED_UNFULFILLED"
  | "COMMITTED_UNFULFILLED_URGENT"
  | "COMMITTED_FULFILLED_NO_RENEWAL"
  | "COMMITTED_FULFILLED_RENEWED"
  | "CONTROL_DAYS_SINCE_POST";

export interface Banner {
  kind: BannerKind;
  days_since_post: number | null;
}

export interface MemberRow {
  member_id: string;
  display_name: string;
  last_posted_at: string | null;
  currently_committed: boolean;
}

export interface CommitmentRecord {
  member_id: string;
  cycle: number;
  committed_at: string;
  via: string;
  null_commit: boolean;
  messages_sent: number;
}

export interface NotificationRecord {
  seq: number;
  at: string;
  kind: "NOTIFICATION";
  payload: {
    member_id: string;
    rule_id: string;
    text: string;
    content_visible: boolean;
    message_id: string | null;
    fired_at: string;
  };
}

export type PushEvent =
  | { type: "message"; content_visible: boolean; record: { seq: number; at: string; payload: { message_id: string; sender_id: string; kind: string; body: string | null } } }
  | { type: "reaction"; record: unknown }
  | { type: "notification"; record: NotificationRecord }
  | { type: "banner"; at: string; banner: Banner }
  | { type: "cycle_started"; cycle: number; at: string };
