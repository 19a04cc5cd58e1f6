#include "toctou/simulator.hpp"

namespace toctou {

namespace {

std::string lc(const json& v) {
    return resource::normalize(v.is_string() ? v.get<std::string>() : v.dump());
}

json read_or(SimSession& s, const std::string& key, json fallback) {
    json v = s.read_resource(key);
    return v.is_null() ? fallback : v;
}

void register_slack(BehaviorRegistry& reg) {
    reg.add("slack", "get_channels", [](SimSession& s, const json&) {
        return s.read_resource("channel_list");
    });
    reg.add("slack", "read_channel_messages", [](SimSession& s, const json& args) {
        return read_or(s, "channel_messages:" + lc(args.at("channel")), json::array());
    });
    reg.add("slack", "send_channel_message", [](SimSession& s, const json& args) {
        std::string channel = lc(args.at("channel"));
        // Delivery resolves against the channel list as it is *now*; a stale
        // list silently misroutes the message.
        json channels = read_or(s, "channel_list", json::object());
        if (!channels.is_object()) channels = json::object();
        json counts = channels.value("message_counts", json::object());
        counts[channel] = counts.value(channel, 0) + 1;
        channels["message_counts"] = counts;
        s.write_resource("channel_list", channels);

        std::string key = "channel_messages:" + channel;
        json messages = read_or(s, key, json::array());
        if (!messages.is_array()) messages = json::array();
        messages.push_back({{"sender", "agent"}, {"body", args.value("body", "")}});
        s.write_resource(key, messages);
        return json{{"status", "sent"}, {"channel", channel}};
    });
    reg.add("slack", "read_inbox", [](SimSession& s, const json& args) {
        return read_or(s, "inbox:" + lc(args.at("user")), json::array());
    });
    reg.add("slack", "send_direct_message", [](SimSession& s, const json& args) {
        std::string key = "direct_messages:" + lc(args.at("recipient"));
        json dms = read_or(s, key, json::array());
        if (!dms.is_array()) dms = json::array();
        dms.push_back({{"sender", "agent"}, {"body", args.value("body", "")}});
        s.write_resource(key, dms);
        return json{{"status", "sent"}};
    });
    reg.add("slack", "get_webpage", [](SimSession& s, const json& args) {
        json pages = read_or(s, "webpage", json::object());
        if (!pages.is_object()) return json("404 not found");
        return pages.value(lc(args.at("url")), json("404 not found"));
    });
    reg.add("slack", "post_webpage", [](SimSession& s, const json& args) {
        json pages = read_or(s, "webpage", json::object());
        if (!pages.is_object()) pages = json::object();
        pages[lc(args.at("url"))] = args.value("content", "");
        s.write_resource("webpage", pages);
        return json{{"status", "posted"}, {"url", lc(args.at("url"))}};
    });
    reg.add("slack", "add_user_to_channel", [](SimSession& s, const json& args) {
        std::string key = "channel_members:" + lc(args.at("channel"));
        json members = read_or(s, key, json::array());
        if (!members.is_array()) members = json::array();
        members.push_back(lc(args.at("user")));
        s.write_resource(key, members);
        return json{{"status", "added"}};
    });
}

void register_web(BehaviorRegistry& reg) {
    reg.add("web", "get_webpage", [](SimSession& s, const json& args) {
        return read_or(s, "webpage:" + lc(args.at("url")), json("404 not found"));
    });
    reg.add("web", "post_webpage", [](SimSession& s, const json& args) {
        s.write_resource("webpage:" + lc(args.at("url")), args.value("content", ""));
        return json{{"status", "posted"}};
    });
}

void register_banking(BehaviorRegistry& reg) {
    reg.add("banking", "get_balance", [](SimSession& s, const json& args) {
        return read_or(s, "account_balance:" + lc(args.at("account")), json(0));
    });
    reg.add("banking", "list_transactions", [](SimSession& s, const json& args) {
        return read_or(s, "transactions:" + lc(args.at("account")), json::array());
    });
    reg.add("banking", "transfer_funds", [](SimSession& s, const json& args) {
        std::string from = "account_balance:" + lc(args.at("from_account"));
        std::string to = "account_balance:" + lc(args.at("to_account"));
        double amount = args.value("amount", 0.0);
        json from_balance = read_or(s, from, json(0));
        json to_balance = read_or(s, to, json(0));
        double fb = from_balance.is_number() ? from_balance.get<double>() : 0.0;
        double tb = to_balance.is_number() ? to_balance.get<double>() : 0.0;
        s.write_resource(from, fb - amount);
        s.write_resource(to, tb + amount);
        return json{{"status", "transferred"}, {"amount", amount}};
    });
    reg.add("banking", "list_contacts", [](SimSession& s, const json&) {
        return read_or(s, "contacts", json::object());
    });
    reg.add("banking", "add_contact", [](SimSession& s, const json& args) {
        json contacts = read_or(s, "contacts", json::object());
        if (!contacts.is_object()) contacts = json::object();
        contacts[lc(args.at("name"))] = args.value("details", "");
        s.write_resource("contacts", contacts);
        return json{{"status", "saved"}};
    });
    reg.add("banking", "list_scheduled_payments", [](SimSession& s, const json&) {
        return read_or(s, "scheduled_payments", json::array());
    });
    reg.add("banking", "schedule_payment", [](SimSession& s, const json& args) {
        json scheduled = read_or(s, "scheduled_payments", json::array());
        if (!scheduled.is_array()) scheduled = json::array();
        scheduled.push_back({{"to", args.value("to", "")}, {"amount", args.value("amount", 0.0)}});
        s.write_resource("scheduled_payments", scheduled);
        return json{{"status", "scheduled"}};
    });
}

void register_workspace(BehaviorRegistry& reg) {
    reg.add("workspace", "search_documents", [](SimSession& s, const json& args) {
        json index = read_or(s, "document_index", json::array());
        std::string query = lc(args.at("query"));
        json hits = json::array();
        if (index.is_array()) {
            for (const auto& doc : index) {
                if (doc.is_string() && doc.get<std::string>().find(query) != std::string::npos) {
                    hits.push_back(doc);
                }
            }
        }
        return hits;
    });
    reg.add("workspace", "read_document", [](SimSession& s, const json& args) {
        return read_or(s, "document:" + lc(args.at("doc")), json("document not found"));
    });
    reg.add("workspace", "update_document", [](SimSession& s, const json& args) {
        std::string key = "document:" + lc(args.at("doc"));
        json previous = s.read_resource(key);
        s.write_resource(key, args.value("content", ""));
        return json{{"status", "updated"}, {"previous", previous}};
    });
    reg.add("workspace", "get_contact", [](SimSession& s, const json& args) {
        json book = read_or(s, "contact_book", json::object());
        if (!book.is_object()) return json();
        return book.value(lc(args.at("name")), json());
    });
    reg.add("workspace", "send_email", [](SimSession& s, const json& args) {
        // Recipient names are resolved at delivery time through the contact
        // book, which the access annotations do not mention.
        json book = read_or(s, "contact_book", json::object());
        std::string to = lc(args.at("to"));
        json address = book.is_object() ? book.value(to, json(to + "@unresolved")) : json(to);
        json outbox = read_or(s, "outbox", json::array());
        if (!outbox.is_array()) outbox = json::array();
        outbox.push_back({{"to", address},
                          {"subject", args.value("subject", "")},
                          {"body", args.value("body", "")}});
        s.write_resource("outbox", outbox);
        return json{{"status", "sent"}, {"resolved", address}};
    });
}

void register_travel(BehaviorRegistry& reg) {
    reg.add("travel", "search_flights", [](SimSession& s, const json& args) {
        return read_or(s, "flights:" + lc(args.at("destination")), json::array());
    });
    reg.add("travel", "get_hotel_info", [](SimSession& s, const json& args) {
        return read_or(s, "hotels:" + lc(args.at("city")), json::array());
    });
    reg.add("travel", "list_bookings", [](SimSession& s, const json&) {
        return read_or(s, "bookings", json::array());
    });
    auto book = [](const char* type) {
        return [type](SimSession& s, const json& args) {
            json bookings = read_or(s, "bookings", json::array());
            if (!bookings.is_array()) bookings = json::array();
            std::string id = type == std::string("flight") ? lc(args.at("flight_id"))
                                                           : lc(args.at("hotel_id"));
            bookings.push_back({{"type", type}, {"id", id}});
            s.write_resource("bookings", bookings);
            return json{{"status", "booked"}, {"id", id}};
        };
    };
    reg.add("travel", "book_flight", book("flight"));
    reg.add("travel", "book_hotel", book("hotel"));
    reg.add("travel", "cancel_booking", [](SimSession& s, const json& args) {
        json bookings = read_or(s, "bookings", json::array());
        json kept = json::array();
        std::string id = lc(args.at("booking_id"));
        if (bookings.is_array()) {
            for (const auto& b : bookings) {
                if (!(b.is_object() && b.value("id", "") == id)) kept.push_back(b);
            }
        }
        s.write_resource("bookings", kept);
        return json{{"status", "cancelled"}};
    });
}

}  // namespace

const BehaviorRegistry& BehaviorRegistry::builtin() {
    static const BehaviorRegistry registry = [] {
        BehaviorRegistry reg;
        register_slack(reg);
        register_web(reg);
        register_banking(reg);
        register_workspace(reg);
        register_travel(reg);
        return reg;
    }();
    return registry;
}

}  // namespace toctou
