//! SMTP + IMAP backend over TCP.
//!
//! Both connections upgrade with STARTTLS when the profile asks for TLS;
//! the conventional implicit-TLS ports (465, 993) are wrapped before the
//! greeting instead. Submission goes through SMTP, every folder and message
//! verb through IMAP.

mod conn;
mod imap;
mod smtp;
pub(crate) mod syntax;

use log::warn;

use crate::codec::{payload_octets, EmfsMessage};
use crate::transport::{
    ListedMessage, MailTransport, MailboxPath, MessageHandle, ProviderProfile, TransportError,
};
use imap::ImapClient;
use smtp::SmtpClient;

pub(crate) fn implicit_tls(port: u16) -> bool {
    matches!(port, 465 | 993)
}

/// Live session with a real provider.
pub struct NetSession {
    profile: ProviderProfile,
    password: String,
    smtp: Option<SmtpClient>,
    imap: ImapClient,
}

impl NetSession {
    /// Logs in on both protocols.
    pub fn connect(profile: &ProviderProfile, password: &str) -> Result<Self, TransportError> {
        let imap = ImapClient::connect(
            &profile.imap_endpoint,
            profile.use_tls,
            &profile.username,
            password,
        )?;
        let smtp = SmtpClient::connect(
            &profile.smtp_endpoint,
            profile.use_tls,
            &profile.username,
            password,
        )?;
        Ok(Self {
            profile: profile.clone(),
            password: password.to_owned(),
            smtp: Some(smtp),
            imap,
        })
    }

    /// True when both connections run over TLS.
    pub fn is_encrypted(&self) -> bool {
        self.imap.is_tls() && self.smtp.as_ref().is_some_and(SmtpClient::is_tls)
    }

    fn smtp(&mut self) -> Result<&mut SmtpClient, TransportError> {
        if self.smtp.is_none() {
            self.smtp = Some(SmtpClient::connect(
                &self.profile.smtp_endpoint,
                self.profile.use_tls,
                &self.profile.username,
                &self.password,
            )?);
        }
        Ok(self.smtp.as_mut().expect("just connected"))
    }
}

impl MailTransport for NetSession {
    fn create_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.imap.create(path)
    }

    fn select_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.imap.select(path).map(|_| ())
    }

    fn list_folders(&mut self, path: &MailboxPath) -> Result<Vec<MailboxPath>, TransportError> {
        self.imap.children(path)
    }

    fn delete_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.imap.delete(path)
    }

    fn send_message(&mut self, message: &EmfsMessage) -> Result<(), TransportError> {
        let wire = message.to_wire();
        let payload = payload_octets(&wire);
        let limit = self.profile.size_limit_s;
        let address = self.profile.address.clone();
        let result = self.smtp()?.send(&address, &wire, payload, limit);
        match result {
            // idle SMTP connections get dropped by providers; retry once on a fresh one
            Err(TransportError::Io(e)) => {
                warn!("SMTP connection lost ({e}); reconnecting");
                self.smtp = None;
                self.smtp()?.send(&address, &wire, payload, limit)
            }
            other => other,
        }
    }

    fn append_message(
        &mut self,
        path: &MailboxPath,
        message: &EmfsMessage,
    ) -> Result<MessageHandle, TransportError> {
        let wire = message.to_wire();
        let payload = payload_octets(&wire);
        self.imap
            .append(path, &wire, payload, self.profile.size_limit_s)
    }

    fn fetch_message(&mut self, handle: &MessageHandle) -> Result<String, TransportError> {
        self.imap.fetch_raw(handle)
    }

    fn list_messages(&mut self, path: &MailboxPath) -> Result<Vec<ListedMessage>, TransportError> {
        self.imap.list_messages(path)
    }

    fn move_message(
        &mut self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError> {
        self.imap.move_message(handle, dest)
    }

    fn delete_message(&mut self, handle: &MessageHandle) -> Result<(), TransportError> {
        self.imap.delete_message(handle)
    }

    fn logout(&mut self) -> Result<(), TransportError> {
        if let Some(mut smtp) = self.smtp.take() {
            let _ = smtp.quit();
        }
        self.imap.logout()
    }

    fn folder_exists(&mut self, path: &MailboxPath) -> Result<bool, TransportError> {
        self.imap.exists(path)
    }
}
